#include "refinery/text.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace refinery::text {

namespace {

bool is_word_byte(unsigned char c) {
    return std::isalnum(c) != 0 || c >= 0x80;
}

bool is_space_byte(unsigned char c) {
    return std::isspace(c) != 0;
}

// Codepoint count of a UTF-8 string = bytes that are not continuation bytes.
std::size_t codepoints(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
}

} // namespace

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
    });
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space_byte(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space_byte(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string normalize_for_match(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char ch : s) {
        if (ch == '#') continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view s, const TokenizeOptions& opts) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        if (is_space_byte(c)) {
            ++i;
            continue;
        }
        // Whole whitespace-delimited chunk, so URLs and mentions can be
        // recognized before the run splitter sees them.
        std::size_t j = i;
        while (j < n && !is_space_byte(static_cast<unsigned char>(s[j]))) ++j;
        std::string_view chunk = s.substr(i, j - i);
        i = j;

        if (opts.drop_urls &&
            (chunk.starts_with("http://") || chunk.starts_with("https://") || chunk.starts_with("www."))) {
            continue;
        }
        if (opts.drop_mentions && chunk.starts_with('@')) {
            continue;
        }
        const bool is_hashtag = chunk.starts_with('#');
        if (is_hashtag && opts.drop_hashtag_terms) {
            continue;
        }

        std::size_t k = 0;
        while (k < chunk.size()) {
            if (!is_word_byte(static_cast<unsigned char>(chunk[k]))) {
                ++k;
                continue;
            }
            std::size_t e = k;
            while (e < chunk.size() && is_word_byte(static_cast<unsigned char>(chunk[e]))) ++e;
            std::string tok = to_lower_ascii(chunk.substr(k, e - k));
            if (codepoints(tok) >= opts.min_token_len) {
                tokens.push_back(std::move(tok));
            }
            k = e;
        }
    }
    return tokens;
}

const std::set<std::string>& default_stopwords() {
    static const std::set<std::string> words = {
        "a",    "about", "after", "all",  "also", "an",   "and",  "any",  "are",  "as",
        "at",   "be",    "been",  "but",  "by",   "can",  "do",   "for",  "from", "get",
        "had",  "has",   "have",  "he",   "her",  "his",  "how",  "i",    "if",   "in",
        "into", "is",    "it",    "its",  "just", "like", "me",   "more", "my",   "no",
        "not",  "now",   "of",    "on",   "or",   "our",  "out",  "she",  "so",   "some",
        "that", "the",   "their", "them", "then", "they", "this", "to",   "too",  "up",
        "was",  "we",    "were",  "what", "when", "who",  "will", "with", "you",  "your",
    };
    return words;
}

std::vector<std::string> top_tokens(const std::vector<std::string>& texts, std::size_t k,
                                    const TokenizeOptions& opts) {
    std::map<std::string, std::size_t> counts;
    const auto& stop = default_stopwords();
    for (const auto& t : texts) {
        for (auto& tok : tokenize(t, opts)) {
            if (!stop.count(tok)) ++counts[tok];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
    // Highest count first; the map already orders ties lexicographically.
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < items.size() && i < k; ++i) out.push_back(items[i].first);
    return out;
}

} // namespace refinery::text
