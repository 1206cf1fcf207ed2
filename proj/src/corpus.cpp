#include "refinery/corpus.hpp"

#include "refinery/errors.hpp"
#include "refinery/sha256.hpp"
#include "refinery/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace refinery {

namespace {

using json = nlohmann::json;

// Days from civil date, valid across the whole int range (Howard Hinnant's
// algorithm, as used by std::chrono::sys_days).
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = static_cast<int>(yy + (m <= 2));
}

bool parse_int(std::string_view s, int& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

} // namespace

std::optional<std::int64_t> parse_timestamp(const std::string& value) {
    const std::string v = text::trim(value);
    if (v.empty()) return std::nullopt;

    // Integer epoch seconds.
    if (v.find_first_not_of("-0123456789") == std::string::npos) {
        std::int64_t secs = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), secs);
        if (ec == std::errc() && p == v.data() + v.size()) return secs;
        return std::nullopt;
    }

    // RFC 3339: YYYY-MM-DD[Tt ]HH:MM:SS[.frac][Z|+HH:MM|-HH:MM]
    if (v.size() < 19 || v[4] != '-' || v[7] != '-') return std::nullopt;
    if (v[10] != 'T' && v[10] != 't' && v[10] != ' ') return std::nullopt;
    if (v[13] != ':' || v[16] != ':') return std::nullopt;

    int year, month, day, hour, minute, second;
    if (!parse_int(std::string_view(v).substr(0, 4), year) ||
        !parse_int(std::string_view(v).substr(5, 2), month) ||
        !parse_int(std::string_view(v).substr(8, 2), day) ||
        !parse_int(std::string_view(v).substr(11, 2), hour) ||
        !parse_int(std::string_view(v).substr(14, 2), minute) ||
        !parse_int(std::string_view(v).substr(17, 2), second)) {
        return std::nullopt;
    }
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) {
        return std::nullopt;
    }

    std::size_t i = 19;
    if (i < v.size() && v[i] == '.') {
        ++i;
        while (i < v.size() && std::isdigit(static_cast<unsigned char>(v[i]))) ++i;  // truncate fraction
    }
    std::int64_t offset = 0;
    if (i < v.size()) {
        if (v[i] == 'Z' || v[i] == 'z') {
            ++i;
        } else if (v[i] == '+' || v[i] == '-') {
            const int sign = v[i] == '+' ? 1 : -1;
            if (i + 6 > v.size() || v[i + 3] != ':') return std::nullopt;
            int oh, om;
            if (!parse_int(std::string_view(v).substr(i + 1, 2), oh) ||
                !parse_int(std::string_view(v).substr(i + 4, 2), om)) {
                return std::nullopt;
            }
            offset = sign * (oh * 3600 + om * 60);
            i += 6;
        } else {
            return std::nullopt;
        }
    }
    if (i != v.size()) return std::nullopt;

    const std::int64_t days = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
    return days * 86400 + hour * 3600 + minute * 60 + second - offset;
}

std::string format_utc_date(std::int64_t epoch_day) {
    int y;
    unsigned m, d;
    civil_from_days(epoch_day, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y, m, d);
    return buf;
}

Document parse_document_line(const std::string& line, std::size_t line_no,
                             std::vector<std::string>* warnings) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) {
        throw ParseError("line " + std::to_string(line_no) + ": expected a JSON object");
    }
    if (!j.contains("id") || !j["id"].is_string()) {
        throw ParseError("line " + std::to_string(line_no) + ": missing string field \"id\"");
    }
    if (!j.contains("text") || !j["text"].is_string()) {
        throw ParseError("line " + std::to_string(line_no) + ": missing string field \"text\"");
    }

    Document doc;
    doc.id = j["id"].get<std::string>();
    doc.text = j["text"].get<std::string>();
    if (text::trim(doc.text).empty()) {
        throw ParseError("line " + std::to_string(line_no) + ": \"text\" is empty after trim");
    }
    if (j.contains("author") && j["author"].is_string()) doc.author = j["author"].get<std::string>();
    if (j.contains("platform") && j["platform"].is_string()) doc.platform = j["platform"].get<std::string>();

    if (j.contains("timestamp")) {
        const auto& ts = j["timestamp"];
        std::optional<std::int64_t> parsed;
        if (ts.is_number_integer()) {
            parsed = ts.get<std::int64_t>();
        } else if (ts.is_string()) {
            parsed = parse_timestamp(ts.get<std::string>());
        }
        if (!parsed) {
            throw ParseError("line " + std::to_string(line_no) + ": unparseable timestamp");
        }
        doc.timestamp = *parsed;
    } else if (warnings) {
        warnings->push_back("document " + doc.id + ": missing timestamp, defaulted to epoch 0");
    }
    return doc;
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open corpus file: " + path.string());
    }
    Corpus corpus;
    corpus.provenance = "loaded from " + path.string();

    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        Document doc = parse_document_line(line, line_no, &corpus.warnings);
        if (!seen_ids.insert(doc.id).second) {
            throw ValidationError("duplicate document id \"" + doc.id + "\" at line " +
                                  std::to_string(line_no));
        }
        corpus.documents.push_back(std::move(doc));
    }
    if (in.bad()) {
        throw IoError("read failure on corpus file: " + path.string());
    }
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write corpus file: " + path.string());
    }
    for (const auto& d : corpus.documents) {
        json j;
        j["id"] = d.id;
        j["text"] = d.text;
        j["author"] = d.author;
        j["timestamp"] = d.timestamp;
        j["platform"] = d.platform;
        out << j.dump() << '\n';
    }
    if (!out) {
        throw IoError("write failure on corpus file: " + path.string());
    }
}

Corpus filter_keywords(const Corpus& corpus, const std::vector<std::string>& keywords) {
    if (keywords.empty()) {
        throw ArgumentError("filter_keywords: keyword list is empty");
    }
    std::vector<std::string> normalized;
    normalized.reserve(keywords.size());
    for (const auto& k : keywords) normalized.push_back(text::normalize_for_match(k));

    Corpus out;
    out.warnings = corpus.warnings;
    for (const auto& doc : corpus.documents) {
        const std::string hay = text::normalize_for_match(doc.text);
        const bool hit = std::any_of(normalized.begin(), normalized.end(), [&](const std::string& k) {
            return !k.empty() && hay.find(k) != std::string::npos;
        });
        if (hit) out.documents.push_back(doc);
    }
    out.provenance = corpus.provenance + "; keyword filter kept " +
                     std::to_string(out.documents.size()) + "/" + std::to_string(corpus.size());
    return out;
}

Corpus cap_per_user(const Corpus& corpus, std::size_t max_per_user, std::uint64_t seed) {
    if (max_per_user == 0) {
        throw ArgumentError("cap_per_user: max_per_user must be >= 1");
    }
    std::map<std::string, std::vector<std::size_t>> by_author;
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
        by_author[corpus.documents[i].author].push_back(i);
    }

    std::vector<bool> keep(corpus.documents.size(), true);
    for (const auto& [author, positions] : by_author) {
        if (positions.size() <= max_per_user) continue;
        // Per-author engine so the draw does not depend on how other
        // authors are interleaved in the corpus.
        std::mt19937_64 rng(seed ^ fnv1a64(author));
        std::vector<std::size_t> pool = positions;
        // Partial Fisher-Yates: the first max_per_user slots are the sample.
        for (std::size_t i = 0; i < max_per_user; ++i) {
            const std::size_t j = i + rng() % (pool.size() - i);
            std::swap(pool[i], pool[j]);
        }
        std::set<std::size_t> chosen(pool.begin(), pool.begin() + max_per_user);
        for (std::size_t pos : positions) {
            if (!chosen.count(pos)) keep[pos] = false;
        }
    }

    Corpus out;
    out.warnings = corpus.warnings;
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
        if (keep[i]) out.documents.push_back(corpus.documents[i]);
    }
    out.provenance = corpus.provenance + "; per-user cap " + std::to_string(max_per_user) +
                     " kept " + std::to_string(out.documents.size()) + "/" + std::to_string(corpus.size());
    return out;
}

DedupResult dedup_corpus(const Corpus& corpus) {
    DedupResult result;
    result.corpus.warnings = corpus.warnings;
    std::unordered_set<std::string> seen;
    for (const auto& doc : corpus.documents) {
        if (seen.insert(text::trim(doc.text)).second) {
            result.corpus.documents.push_back(doc);
        } else {
            ++result.removed;
        }
    }
    result.corpus.provenance = corpus.provenance + "; dedup removed " + std::to_string(result.removed);
    return result;
}

} // namespace refinery
