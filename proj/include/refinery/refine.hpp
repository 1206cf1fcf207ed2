#pragma once

#include "refinery/corpus.hpp"
#include "refinery/hdbscan.hpp"
#include "refinery/providers.hpp"

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace refinery {

// One proposed cluster after summarization, with the judge's verdict once
// the coherence stage has run.
struct ClusterSummary {
    int cluster_id = -1;
    std::string summary;
    std::vector<std::string> representative_ids;
    std::optional<CoherenceVerdict> verdict;
};

struct MergedCluster {
    std::vector<int> member_cluster_ids;    // ascending
    std::vector<std::string> document_ids;  // corpus order
    std::string summary;
};

// Output of the merge / label / assign stages. `labels` lists the distinct
// final labels in first-use order; label_of_cluster is indexed by merged
// cluster; assignments covers every corpus document once the assign stage
// has run ("unassigned" marks documents whose reply never parsed).
struct RefinedStructure {
    std::vector<MergedCluster> clusters;
    std::vector<std::string> labels;
    std::vector<std::string> label_of_cluster;
    std::map<std::string, std::string> assignments;
    double tau = 0.0;
};

struct CoherenceSplit {
    std::vector<ClusterSummary> kept;
    std::vector<ClusterSummary> discarded;
};

struct ThresholdRow {
    double tau = 0.0;
    std::size_t cluster_count = 0;
    double silhouette = 0.0;
    double davies_bouldin = 0.0;
    bool defined = false;  // false when the merge left fewer than 2 clusters
};

struct ThresholdTable {
    std::vector<ThresholdRow> rows;
    double selected_tau = 0.0;
    std::size_t selected_index = 0;
};

struct AssignmentResult {
    std::map<std::string, std::string> by_document;
    std::vector<std::string> notes;
};

// Rows of `members` nearest the member centroid, ties to the smaller row
// index. All members come back when the cluster is smaller than k.
std::vector<Eigen::Index> select_representatives(const std::vector<Eigen::Index>& members,
                                                 const Eigen::MatrixXd& doc_embeddings,
                                                 std::size_t k = 5);

// Member rows per non-noise cluster id, each list ascending.
std::map<int, std::vector<Eigen::Index>> cluster_members(const std::vector<int>& labels);

// Stage 1: summarize each cluster's representatives and keep only the
// clusters the judge calls coherent. Discarded clusters keep their summary
// and verdict so the report can show why they fell out.
CoherenceSplit coherence_filter(const ClusterProposal& proposal, JudgeClient& judge,
                                const std::vector<Document>& corpus,
                                const Eigen::MatrixXd& doc_embeddings,
                                std::size_t k_representatives = 5);

// Connected components of the thresholded cosine graph, each component
// sorted ascending, components ordered by smallest member.
std::vector<std::vector<std::size_t>> merge_components(const Eigen::MatrixXd& embeddings,
                                                       double tau);

// Stage 2: merge clusters whose summaries are redundant at threshold tau.
// Multi-member components get a judge-written summary of their member
// summaries; singletons keep theirs verbatim.
RefinedStructure merge_redundant(const std::vector<ClusterSummary>& summaries,
                                 const Eigen::MatrixXd& summary_embeddings, double tau,
                                 JudgeClient& judge,
                                 const std::map<int, std::vector<Eigen::Index>>& members,
                                 const std::vector<Document>& corpus);

// Evaluates the merge at every tau in the grid: cluster count plus
// silhouette and Davies-Bouldin over the surviving clusters' documents.
// Selected tau maximizes S among rows with C at most 1.25x the grid's
// median C, ties to the smaller tau.
ThresholdTable grid_search_threshold(const std::vector<ClusterSummary>& summaries,
                                     const Eigen::MatrixXd& summary_embeddings,
                                     const Eigen::MatrixXd& doc_embeddings,
                                     const std::map<int, std::vector<Eigen::Index>>& members,
                                     const std::vector<double>& grid = {0.75, 0.80, 0.85, 0.90});

// Stage 3a: candidate label per merged cluster, then near-duplicate labels
// (cosine >= label_tau) consolidated so distinct clusters can share one
// grounded label.
RefinedStructure ground_labels(RefinedStructure refined, JudgeClient& judge,
                               EmbedClient& embedder, double label_tau = 0.85);

// Stage 3b: every document gets exactly one of the final labels or the
// reserved "None of the above". Parse failures are recorded per document
// and marked "unassigned" instead of aborting.
AssignmentResult assign_corpus(const std::vector<Document>& corpus,
                               const std::vector<std::string>& labels, JudgeClient& judge);

void to_json(nlohmann::json& j, const ClusterSummary& s);
void from_json(const nlohmann::json& j, ClusterSummary& s);
void to_json(nlohmann::json& j, const MergedCluster& c);
void from_json(const nlohmann::json& j, MergedCluster& c);
void to_json(nlohmann::json& j, const RefinedStructure& r);
void from_json(const nlohmann::json& j, RefinedStructure& r);
void to_json(nlohmann::json& j, const ThresholdRow& r);
void from_json(const nlohmann::json& j, ThresholdRow& r);
void to_json(nlohmann::json& j, const ThresholdTable& t);
void from_json(const nlohmann::json& j, ThresholdTable& t);

} // namespace refinery
