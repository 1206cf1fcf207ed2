#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace refinery {

// One post. Timestamps are UTC epoch seconds.
struct Document {
    std::string id;
    std::string text;
    std::string author = "unknown";
    std::int64_t timestamp = 0;
    std::string platform = "unknown";
};

struct Corpus {
    std::vector<Document> documents;
    std::string provenance;
    std::vector<std::string> warnings;

    std::size_t size() const { return documents.size(); }
    bool empty() const { return documents.empty(); }
};

// Reads newline-delimited JSON ({id, text, author?, timestamp?, platform?}).
// Line order is preserved. Missing author/platform default to "unknown";
// a missing timestamp defaults to epoch 0 and records a warning.
// Throws IoError, ParseError (naming the line), ValidationError (duplicate id).
Corpus load_corpus(const std::filesystem::path& path);

// Parses one ndjson line into a Document. `line_no` is 1-based and only used
// for error messages.
Document parse_document_line(const std::string& line, std::size_t line_no,
                             std::vector<std::string>* warnings = nullptr);

// Writes the corpus back out as ndjson, one document per line, stable order.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// Retains documents whose normalized text (lowercased, '#' stripped)
// contains at least one keyword as a case-insensitive substring.
Corpus filter_keywords(const Corpus& corpus, const std::vector<std::string>& keywords);

// Authors holding more than `max_per_user` documents are down-sampled to
// exactly `max_per_user` by a seeded uniform draw without replacement.
// Output order is a subsequence of input order; deterministic per seed.
Corpus cap_per_user(const Corpus& corpus, std::size_t max_per_user, std::uint64_t seed);

struct DedupResult {
    Corpus corpus;
    std::size_t removed = 0;
};

// Keeps the first occurrence of each exact whitespace-trimmed text.
DedupResult dedup_corpus(const Corpus& corpus);

// Accepts RFC 3339 ("2020-01-14T10:00:00Z", offsets and fractional seconds
// allowed) or integer epoch seconds in string form.
std::optional<std::int64_t> parse_timestamp(const std::string& value);

// Renders an epoch-day index as YYYY-MM-DD (UTC).
std::string format_utc_date(std::int64_t epoch_day);

} // namespace refinery
