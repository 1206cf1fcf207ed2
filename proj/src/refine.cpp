#include "refinery/refine.hpp"

#include "refinery/distance.hpp"
#include "refinery/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace refinery {

namespace {

struct UnionFind {
    std::vector<std::size_t> parent;

    explicit UnionFind(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), std::size_t(0));
    }

    std::size_t find(std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

// Summary of several summaries. Components larger than the judge's batch
// limit fold hierarchically so every call stays within it.
std::string consolidated_summary(JudgeClient& judge, std::vector<std::string> texts) {
    const std::size_t limit = std::max<std::size_t>(judge.summarize_limit(), 2);
    while (texts.size() > 1) {
        if (texts.size() <= limit) return judge.summarize(texts);
        std::vector<std::string> next;
        for (std::size_t i = 0; i < texts.size(); i += limit) {
            const std::size_t end = std::min(i + limit, texts.size());
            if (end - i == 1) {
                next.push_back(texts[i]);
            } else {
                next.push_back(
                    judge.summarize(std::vector<std::string>(texts.begin() + i, texts.begin() + end)));
            }
        }
        texts = std::move(next);
    }
    return texts.front();
}

} // namespace

std::vector<Eigen::Index> select_representatives(const std::vector<Eigen::Index>& members,
                                                 const Eigen::MatrixXd& doc_embeddings,
                                                 std::size_t k) {
    if (members.empty()) throw ArgumentError("select_representatives: empty cluster");
    if (k == 0) throw ArgumentError("select_representatives: k must be positive");
    for (Eigen::Index r : members) {
        if (r < 0 || r >= doc_embeddings.rows()) {
            throw ValidationError("select_representatives: member row out of range");
        }
    }

    Eigen::RowVectorXd centroid = Eigen::RowVectorXd::Zero(doc_embeddings.cols());
    for (Eigen::Index r : members) centroid += doc_embeddings.row(r);
    centroid /= double(members.size());

    std::vector<std::pair<double, Eigen::Index>> order;
    order.reserve(members.size());
    for (Eigen::Index r : members) {
        order.emplace_back((doc_embeddings.row(r) - centroid).norm(), r);
    }
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    });

    const std::size_t take = std::min(k, order.size());
    std::vector<Eigen::Index> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(order[i].second);
    return out;
}

std::map<int, std::vector<Eigen::Index>> cluster_members(const std::vector<int>& labels) {
    std::map<int, std::vector<Eigen::Index>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= 0) members[labels[i]].push_back(Eigen::Index(i));
    }
    return members;
}

CoherenceSplit coherence_filter(const ClusterProposal& proposal, JudgeClient& judge,
                                const std::vector<Document>& corpus,
                                const Eigen::MatrixXd& doc_embeddings,
                                std::size_t k_representatives) {
    if (proposal.cluster_count == 0) {
        throw ArgumentError("coherence_filter: proposal has no clusters");
    }
    if (proposal.labels.size() != corpus.size()) {
        throw ValidationError("coherence_filter: label count does not match corpus size");
    }
    if (Eigen::Index(corpus.size()) != doc_embeddings.rows()) {
        throw ValidationError("coherence_filter: embedding rows do not match corpus size");
    }

    CoherenceSplit split;
    for (const auto& [cid, rows] : cluster_members(proposal.labels)) {
        const auto reps = select_representatives(rows, doc_embeddings, k_representatives);
        std::vector<std::string> texts;
        texts.reserve(reps.size());
        for (Eigen::Index r : reps) texts.push_back(corpus[std::size_t(r)].text);

        ClusterSummary summary;
        summary.cluster_id = cid;
        for (Eigen::Index r : reps) summary.representative_ids.push_back(corpus[std::size_t(r)].id);
        const std::string context = "cluster " + std::to_string(cid) + ": ";
        try {
            summary.summary = judge.summarize(texts);
            summary.verdict = judge.verify_coherence(summary.summary, texts);
        } catch (const ParseError& e) {
            throw ParseError(context + e.what());
        } catch (const CostLimitError&) {
            throw;
        } catch (const ProviderError& e) {
            throw ProviderError(context + e.what());
        }

        (summary.verdict->coherent ? split.kept : split.discarded).push_back(std::move(summary));
    }
    return split;
}

std::vector<std::vector<std::size_t>> merge_components(const Eigen::MatrixXd& embeddings,
                                                       double tau) {
    if (!(tau > 0.0 && tau <= 1.0)) {
        throw ArgumentError("merge_components: tau must be in (0, 1]");
    }
    const std::size_t n = std::size_t(embeddings.rows());
    UnionFind uf(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (detail::cosine_similarity(embeddings.row(Eigen::Index(i)),
                                          embeddings.row(Eigen::Index(j))) >= tau) {
                uf.unite(i, j);
            }
        }
    }

    std::map<std::size_t, std::vector<std::size_t>> by_root;
    for (std::size_t i = 0; i < n; ++i) by_root[uf.find(i)].push_back(i);

    std::vector<std::vector<std::size_t>> components;
    components.reserve(by_root.size());
    for (auto& [root, comp] : by_root) components.push_back(std::move(comp));
    // map keys are the smallest member of each component, so this order is
    // already canonical and permutation-stable
    return components;
}

RefinedStructure merge_redundant(const std::vector<ClusterSummary>& summaries,
                                 const Eigen::MatrixXd& summary_embeddings, double tau,
                                 JudgeClient& judge,
                                 const std::map<int, std::vector<Eigen::Index>>& members,
                                 const std::vector<Document>& corpus) {
    if (Eigen::Index(summaries.size()) != summary_embeddings.rows()) {
        throw ValidationError("merge_redundant: embeddings do not align with summaries");
    }
    for (const auto& s : summaries) {
        if (!members.count(s.cluster_id)) {
            throw ValidationError("merge_redundant: no member list for cluster " +
                                  std::to_string(s.cluster_id));
        }
    }

    RefinedStructure refined;
    refined.tau = tau;
    for (const auto& comp : merge_components(summary_embeddings, tau)) {
        MergedCluster merged;
        std::vector<Eigen::Index> rows;
        std::vector<std::string> texts;
        for (std::size_t idx : comp) {
            merged.member_cluster_ids.push_back(summaries[idx].cluster_id);
            texts.push_back(summaries[idx].summary);
            const auto& m = members.at(summaries[idx].cluster_id);
            rows.insert(rows.end(), m.begin(), m.end());
        }
        std::sort(merged.member_cluster_ids.begin(), merged.member_cluster_ids.end());
        std::sort(rows.begin(), rows.end());
        for (Eigen::Index r : rows) {
            if (r < 0 || r >= Eigen::Index(corpus.size())) {
                throw ValidationError("merge_redundant: member row out of corpus range");
            }
            merged.document_ids.push_back(corpus[std::size_t(r)].id);
        }
        merged.summary = comp.size() == 1 ? summaries[comp.front()].summary
                                          : consolidated_summary(judge, std::move(texts));
        refined.clusters.push_back(std::move(merged));
    }
    return refined;
}

ThresholdTable grid_search_threshold(const std::vector<ClusterSummary>& summaries,
                                     const Eigen::MatrixXd& summary_embeddings,
                                     const Eigen::MatrixXd& doc_embeddings,
                                     const std::map<int, std::vector<Eigen::Index>>& members,
                                     const std::vector<double>& grid) {
    if (grid.empty()) throw ArgumentError("grid_search_threshold: empty grid");
    if (Eigen::Index(summaries.size()) != summary_embeddings.rows()) {
        throw ValidationError("grid_search_threshold: embeddings do not align with summaries");
    }

    // Flatten the surviving clusters' documents once; per-tau labels are the
    // component index of the owning cluster.
    std::vector<Eigen::Index> doc_rows;
    std::vector<std::size_t> owner;  // summary index per doc
    for (std::size_t s = 0; s < summaries.size(); ++s) {
        auto it = members.find(summaries[s].cluster_id);
        if (it == members.end()) {
            throw ValidationError("grid_search_threshold: no member list for cluster " +
                                  std::to_string(summaries[s].cluster_id));
        }
        for (Eigen::Index r : it->second) {
            if (r < 0 || r >= doc_embeddings.rows()) {
                throw ValidationError("grid_search_threshold: member row out of range");
            }
            doc_rows.push_back(r);
            owner.push_back(s);
        }
    }

    Eigen::MatrixXd points(Eigen::Index(doc_rows.size()), doc_embeddings.cols());
    for (std::size_t i = 0; i < doc_rows.size(); ++i) {
        points.row(Eigen::Index(i)) = doc_embeddings.row(doc_rows[i]);
    }

    constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
    ThresholdTable table;
    for (double tau : grid) {
        const auto comps = merge_components(summary_embeddings, tau);
        std::vector<int> comp_of(summaries.size(), -1);
        for (std::size_t c = 0; c < comps.size(); ++c) {
            for (std::size_t idx : comps[c]) comp_of[idx] = int(c);
        }
        std::vector<int> labels(doc_rows.size());
        for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = comp_of[owner[i]];

        ThresholdRow row;
        row.tau = tau;
        row.cluster_count = comps.size();
        row.silhouette = kNan;
        row.davies_bouldin = kNan;
        if (comps.size() >= 2) {
            try {
                row.silhouette = silhouette(points, labels);
                row.davies_bouldin = davies_bouldin(points, labels);
                row.defined = true;
            } catch (const UndefinedMetricError&) {
                row.silhouette = kNan;
                row.davies_bouldin = kNan;
                row.defined = false;
            }
        }
        table.rows.push_back(row);
    }

    std::vector<double> counts;
    counts.reserve(table.rows.size());
    for (const auto& r : table.rows) counts.push_back(double(r.cluster_count));
    std::sort(counts.begin(), counts.end());
    const std::size_t h = counts.size() / 2;
    const double median =
        counts.size() % 2 == 1 ? counts[h] : (counts[h - 1] + counts[h]) / 2.0;
    const double ceiling = 1.25 * median;

    bool found = false;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& r = table.rows[i];
        if (!r.defined || double(r.cluster_count) > ceiling) continue;
        const auto& best = table.rows[table.selected_index];
        if (!found || r.silhouette > best.silhouette ||
            (r.silhouette == best.silhouette && r.tau < best.tau)) {
            table.selected_index = i;
            table.selected_tau = r.tau;
            found = true;
        }
    }
    if (!found) {
        throw UndefinedMetricError(
            "grid_search_threshold: no threshold produced two clusters within the count ceiling");
    }
    return table;
}

RefinedStructure ground_labels(RefinedStructure refined, JudgeClient& judge,
                               EmbedClient& embedder, double label_tau) {
    if (!(label_tau > 0.0 && label_tau <= 1.0)) {
        throw ArgumentError("ground_labels: label_tau must be in (0, 1]");
    }
    refined.labels.clear();
    refined.label_of_cluster.assign(refined.clusters.size(), "");
    if (refined.clusters.empty()) return refined;

    std::vector<std::string> candidates;
    candidates.reserve(refined.clusters.size());
    for (std::size_t i = 0; i < refined.clusters.size(); ++i) {
        try {
            candidates.push_back(judge.generate_label(refined.clusters[i].summary));
        } catch (const ParseError& e) {
            throw ParseError("merged cluster " + std::to_string(i) + ": " + e.what());
        }
    }

    const Eigen::MatrixXd label_vectors = embedder.embed(candidates);
    for (const auto& comp : merge_components(label_vectors, label_tau)) {
        std::string final_label;
        if (comp.size() == 1) {
            final_label = candidates[comp.front()];
        } else {
            std::vector<std::string> group;
            for (std::size_t idx : comp) group.push_back(candidates[idx]);
            final_label = judge.consolidate_labels(group);
        }
        for (std::size_t idx : comp) refined.label_of_cluster[idx] = final_label;
    }

    for (const auto& label : refined.label_of_cluster) {
        if (std::find(refined.labels.begin(), refined.labels.end(), label) ==
            refined.labels.end()) {
            refined.labels.push_back(label);
        }
    }
    return refined;
}

AssignmentResult assign_corpus(const std::vector<Document>& corpus,
                               const std::vector<std::string>& labels, JudgeClient& judge) {
    if (labels.empty()) throw ArgumentError("assign_corpus: empty label list");

    AssignmentResult result;
    for (const auto& doc : corpus) {
        try {
            result.by_document[doc.id] = judge.assign_label(doc.text, labels);
        } catch (const ParseError& e) {
            result.by_document[doc.id] = "unassigned";
            result.notes.push_back("document " + doc.id + ": " + e.what());
        }
    }
    return result;
}

void to_json(nlohmann::json& j, const ClusterSummary& s) {
    j = nlohmann::json{{"cluster_id", s.cluster_id},
                       {"summary", s.summary},
                       {"representative_ids", s.representative_ids}};
    if (s.verdict) j["verdict"] = *s.verdict;
}

void from_json(const nlohmann::json& j, ClusterSummary& s) {
    s.cluster_id = j.at("cluster_id").get<int>();
    s.summary = j.at("summary").get<std::string>();
    s.representative_ids = j.at("representative_ids").get<std::vector<std::string>>();
    s.verdict.reset();
    if (j.contains("verdict")) s.verdict = j["verdict"].get<CoherenceVerdict>();
}

void to_json(nlohmann::json& j, const MergedCluster& c) {
    j = nlohmann::json{{"member_cluster_ids", c.member_cluster_ids},
                       {"document_ids", c.document_ids},
                       {"summary", c.summary}};
}

void from_json(const nlohmann::json& j, MergedCluster& c) {
    c.member_cluster_ids = j.at("member_cluster_ids").get<std::vector<int>>();
    c.document_ids = j.at("document_ids").get<std::vector<std::string>>();
    c.summary = j.at("summary").get<std::string>();
}

void to_json(nlohmann::json& j, const RefinedStructure& r) {
    j = nlohmann::json{{"clusters", r.clusters},
                       {"labels", r.labels},
                       {"label_of_cluster", r.label_of_cluster},
                       {"assignments", r.assignments},
                       {"tau", r.tau}};
}

void from_json(const nlohmann::json& j, RefinedStructure& r) {
    r.clusters = j.at("clusters").get<std::vector<MergedCluster>>();
    r.labels = j.at("labels").get<std::vector<std::string>>();
    r.label_of_cluster = j.at("label_of_cluster").get<std::vector<std::string>>();
    r.assignments = j.at("assignments").get<std::map<std::string, std::string>>();
    r.tau = j.at("tau").get<double>();
}

void to_json(nlohmann::json& j, const ThresholdRow& r) {
    j = nlohmann::json{{"tau", r.tau}, {"cluster_count", r.cluster_count}, {"defined", r.defined}};
    if (r.defined) {
        j["silhouette"] = r.silhouette;
        j["davies_bouldin"] = r.davies_bouldin;
    }
}

void from_json(const nlohmann::json& j, ThresholdRow& r) {
    r.tau = j.at("tau").get<double>();
    r.cluster_count = j.at("cluster_count").get<std::size_t>();
    r.defined = j.at("defined").get<bool>();
    constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
    r.silhouette = r.defined ? j.at("silhouette").get<double>() : kNan;
    r.davies_bouldin = r.defined ? j.at("davies_bouldin").get<double>() : kNan;
}

void to_json(nlohmann::json& j, const ThresholdTable& t) {
    j = nlohmann::json{{"rows", t.rows},
                       {"selected_tau", t.selected_tau},
                       {"selected_index", t.selected_index}};
}

void from_json(const nlohmann::json& j, ThresholdTable& t) {
    t.rows = j.at("rows").get<std::vector<ThresholdRow>>();
    t.selected_tau = j.at("selected_tau").get<double>();
    t.selected_index = j.at("selected_index").get<std::size_t>();
}

} // namespace refinery
