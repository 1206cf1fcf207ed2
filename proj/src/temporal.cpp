#include "refinery/temporal.hpp"

#include "refinery/errors.hpp"

#include <algorithm>
#include <random>
#include <set>

namespace refinery {

std::int64_t utc_day(std::int64_t timestamp) {
    std::int64_t d = timestamp / 86400;
    if (timestamp % 86400 < 0) --d;
    return d;
}

WindowSelection densest_window(const Corpus& corpus, std::size_t days) {
    if (days == 0) throw ArgumentError("densest_window: window length must be at least 1 day");
    if (corpus.empty()) throw ArgumentError("densest_window: empty corpus");

    bool any_timestamped = false;
    std::map<std::int64_t, std::size_t> day_counts;
    for (const auto& d : corpus.documents) {
        if (d.timestamp != 0) any_timestamped = true;
        ++day_counts[utc_day(d.timestamp)];
    }

    WindowSelection w;
    if (!any_timestamped) {
        // Every timestamp is the missing-field default; a window over them
        // would be meaningless, so report the epoch day itself.
        w.start_day = w.end_day = 0;
        w.post_count = corpus.size();
        w.degenerate = true;
        w.start = w.end = format_utc_date(0);
        return w;
    }

    std::vector<std::int64_t> day_list;
    std::vector<std::size_t> prefix{0};
    for (const auto& [day, count] : day_counts) {
        day_list.push_back(day);
        prefix.push_back(prefix.back() + count);
    }
    const std::int64_t min_day = day_list.front();
    const std::int64_t max_day = day_list.back();

    auto count_in = [&](std::int64_t lo, std::int64_t hi) {
        const auto a = std::lower_bound(day_list.begin(), day_list.end(), lo) - day_list.begin();
        const auto b = std::upper_bound(day_list.begin(), day_list.end(), hi) - day_list.begin();
        return prefix[std::size_t(b)] - prefix[std::size_t(a)];
    };

    // The window sum only changes where a post day enters or leaves, so it is
    // enough to evaluate those starts; each is the earliest point of its
    // constant stretch, which preserves the earliest-start tie rule.
    const std::int64_t span = std::int64_t(days) - 1;
    std::set<std::int64_t> starts{min_day};
    for (std::int64_t day : day_list) {
        for (std::int64_t s : {day - span, day, day + 1}) {
            if (s >= min_day && s <= max_day) starts.insert(s);
        }
    }

    bool found = false;
    for (std::int64_t s : starts) {
        const std::size_t count = count_in(s, s + span);
        if (!found || count > w.post_count) {
            w.start_day = s;
            w.post_count = count;
            found = true;
        }
    }
    w.end_day = w.start_day + span;
    w.start = format_utc_date(w.start_day);
    w.end = format_utc_date(w.end_day);
    return w;
}

Corpus filter_window(const Corpus& corpus, const WindowSelection& window) {
    Corpus out;
    out.provenance = corpus.provenance;
    for (const auto& d : corpus.documents) {
        const std::int64_t day = utc_day(d.timestamp);
        if (day >= window.start_day && day <= window.end_day) out.documents.push_back(d);
    }
    return out;
}

namespace {

Corpus sample_to(const Corpus& corpus, std::size_t target, std::uint64_t seed) {
    std::vector<std::size_t> pool(corpus.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < target; ++i) {
        const std::size_t j = i + rng() % (pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(target);
    std::sort(pool.begin(), pool.end());

    Corpus out;
    out.provenance = corpus.provenance;
    out.documents.reserve(target);
    for (std::size_t i : pool) out.documents.push_back(corpus.documents[i]);
    return out;
}

} // namespace

std::pair<Corpus, Corpus> match_volume(const Corpus& a, const Corpus& b, std::uint64_t seed) {
    if (a.empty() || b.empty()) throw ArgumentError("match_volume: both corpora must be non-empty");
    if (a.size() == b.size()) return {a, b};
    if (a.size() > b.size()) return {sample_to(a, b.size(), seed), b};
    return {a, sample_to(b, a.size(), seed)};
}

ContingencyTable theme_platform_table(const std::map<std::string, std::string>& assignments_a,
                                      const std::map<std::string, std::string>& assignments_b,
                                      const std::vector<std::string>& label_universe,
                                      const std::string& platform_a,
                                      const std::string& platform_b) {
    if (assignments_a.empty() && assignments_b.empty()) {
        throw ArgumentError("theme_platform_table: both assignment sets are empty");
    }
    if (label_universe.empty()) {
        throw ArgumentError("theme_platform_table: empty label universe");
    }

    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < label_universe.size(); ++i) {
        if (!row_of.emplace(label_universe[i], i).second) {
            throw ValidationError("theme_platform_table: duplicate label \"" + label_universe[i] +
                                  "\" in universe");
        }
    }

    ContingencyTable table;
    table.column_labels = {platform_a, platform_b};
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(Eigen::Index(label_universe.size()), 2);
    std::size_t skipped = 0;
    auto tally = [&](const std::map<std::string, std::string>& assignments, Eigen::Index col) {
        for (const auto& [doc_id, label] : assignments) {
            if (label == "unassigned") {
                ++skipped;
                continue;
            }
            auto it = row_of.find(label);
            if (it == row_of.end()) {
                throw ValidationError("theme_platform_table: assignment \"" + label +
                                      "\" for document " + doc_id + " is outside the universe");
            }
            counts(Eigen::Index(it->second), col) += 1.0;
        }
    };
    tally(assignments_a, 0);
    tally(assignments_b, 1);
    if (skipped > 0) {
        table.notes.push_back(std::to_string(skipped) + " unassigned document(s) excluded");
    }

    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < counts.rows(); ++r) {
        if (counts.row(r).sum() > 0) {
            keep.push_back(r);
        } else {
            table.notes.push_back("theme \"" + label_universe[std::size_t(r)] +
                                  "\" unused by both platforms; row dropped");
        }
    }
    table.counts.resize(Eigen::Index(keep.size()), 2);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        table.counts.row(Eigen::Index(i)) = counts.row(keep[i]);
        table.row_labels.push_back(label_universe[std::size_t(keep[i])]);
    }
    return table;
}

void to_json(nlohmann::json& j, const WindowSelection& w) {
    j = nlohmann::json{{"start_day", w.start_day}, {"end_day", w.end_day},
                       {"start", w.start},         {"end", w.end},
                       {"post_count", w.post_count}, {"degenerate", w.degenerate}};
}

void from_json(const nlohmann::json& j, WindowSelection& w) {
    w.start_day = j.at("start_day").get<std::int64_t>();
    w.end_day = j.at("end_day").get<std::int64_t>();
    w.start = j.at("start").get<std::string>();
    w.end = j.at("end").get<std::string>();
    w.post_count = j.at("post_count").get<std::size_t>();
    w.degenerate = j.value("degenerate", false);
}

} // namespace refinery
