#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace refinery::text {

// Lowercases ASCII letters and removes '#' so hashtag-driven posts match
// plain keywords. Non-ASCII bytes pass through untouched.
std::string normalize_for_match(std::string_view s);

struct TokenizeOptions {
    std::size_t min_token_len = 2;  // counted in codepoints
    bool drop_urls = true;
    bool drop_mentions = true;
    bool drop_hashtag_terms = false;  // drop the tag word entirely instead of keeping it
};

// Splits into maximal runs of letters/digits after stripping URLs and
// @-mentions; '#' is removed so the tag word itself survives (unless
// drop_hashtag_terms). ASCII is case-folded; bytes >= 0x80 are treated as
// word characters, which keeps UTF-8 sequences intact without a full
// Unicode classifier.
std::vector<std::string> tokenize(std::string_view s, const TokenizeOptions& opts = {});

// Small built-in English stopword list; overridable wherever it is consumed.
const std::set<std::string>& default_stopwords();

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

// Top-k tokens by total count across `texts`, excluding stopwords; ties
// broken lexicographically. Used by the deterministic mock judge.
std::vector<std::string> top_tokens(const std::vector<std::string>& texts, std::size_t k,
                                    const TokenizeOptions& opts = {});

} // namespace refinery::text
