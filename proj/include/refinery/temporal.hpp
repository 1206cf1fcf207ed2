#pragma once

#include "refinery/corpus.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace refinery {

// Inclusive UTC calendar-day window. start/end are formatted dates for the
// matching day numbers; end - start spans exactly the requested length even
// when the data run out earlier.
struct WindowSelection {
    std::int64_t start_day = 0;
    std::int64_t end_day = 0;
    std::string start;
    std::string end;
    std::size_t post_count = 0;
    bool degenerate = false;  // every timestamp was the epoch default
};

struct ContingencyTable {
    Eigen::MatrixXd counts;  // rows = themes, cols = platforms
    std::vector<std::string> row_labels;
    std::vector<std::string> column_labels;
    std::vector<std::string> notes;
};

// UTC day number for an epoch-seconds timestamp (floor division).
std::int64_t utc_day(std::int64_t timestamp);

// Window of `days` consecutive UTC days holding the most posts, ties to the
// earliest start. Matches a brute-force scan over every candidate start.
WindowSelection densest_window(const Corpus& corpus, std::size_t days);

// Documents whose timestamp falls inside the window, corpus order.
Corpus filter_window(const Corpus& corpus, const WindowSelection& window);

// Seeded uniform down-sample of the larger corpus to the smaller one's size,
// original order preserved. The smaller corpus passes through unchanged.
std::pair<Corpus, Corpus> match_volume(const Corpus& a, const Corpus& b, std::uint64_t seed);

// Theme-by-platform count matrix over the given label universe, universe
// order. Rows no platform used are dropped with a note, as are documents
// whose assignment never parsed.
ContingencyTable theme_platform_table(const std::map<std::string, std::string>& assignments_a,
                                      const std::map<std::string, std::string>& assignments_b,
                                      const std::vector<std::string>& label_universe,
                                      const std::string& platform_a = "a",
                                      const std::string& platform_b = "b");

void to_json(nlohmann::json& j, const WindowSelection& w);
void from_json(const nlohmann::json& j, WindowSelection& w);

} // namespace refinery
