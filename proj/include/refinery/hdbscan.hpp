#pragma once

#include "refinery/distance.hpp"
#include "refinery/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace refinery {

struct ClusteringConfig {
    std::size_t min_cluster_size = 5;
    std::size_t min_samples = 5;
    std::string metric = "euclidean";
    std::string selection_method = "eom";
};

struct ClusterProposal {
    std::vector<int> labels;  // -1 = noise
    ClusteringConfig config;
    double dbcv = -1.0;  // sentinel until scored
    std::size_t cluster_count = 0;
};

namespace detail {

// Distances of exactly zero would make density lambda = 1/d blow up; the cap
// keeps stabilities finite while still dominating every real split level.
inline constexpr double kLambdaCap = 1e12;

inline double to_lambda(double dist) { return dist > 0 ? std::min(1.0 / dist, kLambdaCap) : kLambdaCap; }

template <typename Scalar>
struct MstEdge {
    Eigen::Index a, b;
    Scalar weight;
};

// Core distance = distance to the k-th nearest other point. k is clamped to
// n - 1 so tiny inputs degrade instead of failing inside the grid search.
template <typename Scalar>
std::vector<Scalar> core_distances(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& dist, std::size_t k) {
    const Eigen::Index n = dist.rows();
    const std::size_t kk = std::min<std::size_t>(std::max<std::size_t>(k, 1), n - 1);
    std::vector<Scalar> core(n);
    std::vector<Scalar> row(n - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::size_t w = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i) row[w++] = dist(i, j);
        }
        std::nth_element(row.begin(), row.begin() + (kk - 1), row.end());
        core[i] = row[kk - 1];
    }
    return core;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> mutual_reachability(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& dist,
    const std::vector<Scalar>& core) {
    const Eigen::Index n = dist.rows();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> mr(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        mr(i, i) = 0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const Scalar w = std::max({core[i], core[j], dist(i, j)});
            mr(i, j) = w;
            mr(j, i) = w;
        }
    }
    return mr;
}

// Exact Prim over the full weight matrix. Ties resolve to the smallest
// vertex index, which pins the tree (and everything downstream) for a given
// input order.
template <typename Scalar>
std::vector<MstEdge<Scalar>> prim_mst(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& weights) {
    const Eigen::Index n = weights.rows();
    std::vector<MstEdge<Scalar>> edges;
    if (n < 2) return edges;

    std::vector<bool> in_tree(n, false);
    std::vector<Scalar> best(n, std::numeric_limits<Scalar>::infinity());
    std::vector<Eigen::Index> from(n, 0);
    in_tree[0] = true;
    for (Eigen::Index j = 1; j < n; ++j) best[j] = weights(0, j);

    for (Eigen::Index step = 1; step < n; ++step) {
        Eigen::Index pick = -1;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!in_tree[j] && (pick < 0 || best[j] < best[pick])) pick = j;
        }
        in_tree[pick] = true;
        edges.push_back({from[pick], pick, best[pick]});
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!in_tree[j] && weights(pick, j) < best[j]) {
                best[j] = weights(pick, j);
                from[j] = pick;
            }
        }
    }
    return edges;
}

// Single-linkage dendrogram. Leaves are 0..n-1, internal nodes n..2n-2 in
// merge order (edges sorted by weight, then endpoint indices).
template <typename Scalar>
struct DendroNode {
    Eigen::Index left, right;  // child node ids
    Scalar dist;
    Eigen::Index size;
};

template <typename Scalar>
std::vector<DendroNode<Scalar>> single_linkage(std::vector<MstEdge<Scalar>> edges, Eigen::Index n) {
    for (auto& e : edges) {
        if (e.a > e.b) std::swap(e.a, e.b);
    }
    std::sort(edges.begin(), edges.end(), [](const MstEdge<Scalar>& x, const MstEdge<Scalar>& y) {
        if (x.weight != y.weight) return x.weight < y.weight;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });

    std::vector<Eigen::Index> parent(2 * n - 1);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](Eigen::Index x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };

    std::vector<Eigen::Index> node_of(2 * n - 1);
    std::iota(node_of.begin(), node_of.end(), 0);
    std::vector<DendroNode<Scalar>> nodes;
    nodes.reserve(n - 1);
    Eigen::Index next = n;
    for (const auto& e : edges) {
        const Eigen::Index ra = find(e.a), rb = find(e.b);
        const Eigen::Index la = node_of[ra], lb = node_of[rb];
        const Eigen::Index size_a = la < n ? 1 : nodes[la - n].size;
        const Eigen::Index size_b = lb < n ? 1 : nodes[lb - n].size;
        nodes.push_back({la, lb, e.weight, size_a + size_b});
        parent[ra] = rb;
        node_of[rb] = next++;
    }
    return nodes;
}

// Condensed tree: one node per cluster that ever held >= min_cluster_size
// points. Points leave their cluster at the lambda where their component
// drops below min_cluster_size.
struct CondensedCluster {
    int parent = -1;
    double lambda_birth = 0.0;
    Eigen::Index size = 0;  // point count at birth
    std::vector<Eigen::Index> fallout_points;
    std::vector<double> fallout_lambdas;
    std::vector<int> children;
};

template <typename Scalar>
void collect_leaves(const std::vector<DendroNode<Scalar>>& dendro, Eigen::Index node,
                    Eigen::Index n, std::vector<Eigen::Index>& out) {
    if (node < n) {
        out.push_back(node);
        return;
    }
    collect_leaves(dendro, dendro[node - n].left, n, out);
    collect_leaves(dendro, dendro[node - n].right, n, out);
}

template <typename Scalar>
std::vector<CondensedCluster> condense_tree(const std::vector<DendroNode<Scalar>>& dendro,
                                            Eigen::Index n, std::size_t min_cluster_size) {
    std::vector<CondensedCluster> clusters(1);
    clusters[0].lambda_birth = 0.0;
    clusters[0].size = n;

    // (raw dendrogram node, owning condensed cluster)
    std::vector<std::pair<Eigen::Index, int>> stack{{2 * n - 2, 0}};
    while (!stack.empty()) {
        auto [node, cid] = stack.back();
        stack.pop_back();

        const auto& d = dendro[node - n];
        const double lambda = to_lambda(double(d.dist));
        const Eigen::Index size_l = d.left < n ? 1 : dendro[d.left - n].size;
        const Eigen::Index size_r = d.right < n ? 1 : dendro[d.right - n].size;
        const bool big_l = size_l >= Eigen::Index(min_cluster_size);
        const bool big_r = size_r >= Eigen::Index(min_cluster_size);

        auto drop_leaves = [&](Eigen::Index child) {
            std::vector<Eigen::Index> leaves;
            collect_leaves(dendro, child, n, leaves);
            for (Eigen::Index p : leaves) {
                clusters[cid].fallout_points.push_back(p);
                clusters[cid].fallout_lambdas.push_back(lambda);
            }
        };

        if (big_l && big_r) {
            for (Eigen::Index child : {d.left, d.right}) {
                CondensedCluster c;
                c.parent = cid;
                c.lambda_birth = lambda;
                c.size = child < n ? 1 : dendro[child - n].size;
                const int child_id = int(clusters.size());
                clusters[cid].children.push_back(child_id);
                clusters.push_back(std::move(c));
                stack.emplace_back(child, child_id);
            }
        } else if (big_l) {
            drop_leaves(d.right);
            stack.emplace_back(d.left, cid);
        } else if (big_r) {
            drop_leaves(d.left);
            stack.emplace_back(d.right, cid);
        } else {
            drop_leaves(d.left);
            drop_leaves(d.right);
        }
    }
    return clusters;
}

// Stability = sum over everything that leaves the cluster of
// (lambda_leave - lambda_birth); children leave en bloc at their birth.
inline std::vector<double> cluster_stabilities(const std::vector<CondensedCluster>& clusters) {
    std::vector<double> stability(clusters.size(), 0.0);
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        for (double l : clusters[c].fallout_lambdas) stability[c] += l - clusters[c].lambda_birth;
        for (int child : clusters[c].children) {
            stability[c] +=
                double(clusters[child].size) * (clusters[child].lambda_birth - clusters[c].lambda_birth);
        }
    }
    return stability;
}

// Excess-of-mass selection. The root is never selectable, so a flat dataset
// yields all-noise rather than one giant cluster.
inline std::vector<bool> excess_of_mass(const std::vector<CondensedCluster>& clusters,
                                        std::vector<double> stability) {
    const std::size_t m = clusters.size();
    std::vector<bool> selected(m, false);
    for (std::size_t c = 1; c < m; ++c) selected[c] = true;

    // Children always carry larger ids than their parent, so reverse id order
    // is a bottom-up sweep.
    for (std::size_t c = m; c-- > 1;) {
        if (clusters[c].children.empty()) continue;
        double subtree = 0;
        for (int child : clusters[c].children) subtree += stability[child];
        if (subtree > stability[c]) {
            stability[c] = subtree;
            selected[c] = false;
        } else {
            std::vector<int> frontier(clusters[c].children.begin(), clusters[c].children.end());
            while (!frontier.empty()) {
                const int d = frontier.back();
                frontier.pop_back();
                selected[d] = false;
                frontier.insert(frontier.end(), clusters[d].children.begin(),
                                clusters[d].children.end());
            }
        }
    }
    selected[0] = false;
    return selected;
}

} // namespace detail

// HDBSCAN over a dense coordinate matrix (rows = points). Exact O(N^2)
// mutual-reachability MST, single-linkage hierarchy, condensed tree,
// excess-of-mass extraction. Cluster ids are contiguous from 0, ordered by
// each cluster's smallest member index.
template <typename Derived>
ClusterProposal run_hdbscan(const Eigen::MatrixBase<Derived>& points,
                            const ClusteringConfig& config) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = points.rows();

    if (config.min_cluster_size < 2) {
        throw ArgumentError("run_hdbscan: min_cluster_size must be >= 2");
    }
    if (config.min_samples < 1) {
        throw ArgumentError("run_hdbscan: min_samples must be >= 1");
    }
    if (config.metric != "euclidean") {
        throw ArgumentError("run_hdbscan: unsupported metric \"" + config.metric + "\"");
    }
    if (config.selection_method != "eom") {
        throw ArgumentError("run_hdbscan: unsupported selection method \"" +
                            config.selection_method + "\"");
    }
    if (n < Eigen::Index(config.min_cluster_size)) {
        throw ArgumentError("run_hdbscan: fewer points than min_cluster_size");
    }
    if (!points.allFinite()) {
        throw ValidationError("run_hdbscan: non-finite coordinates");
    }

    ClusterProposal proposal;
    proposal.config = config;
    proposal.labels.assign(std::size_t(n), -1);

    const auto dist = detail::pairwise_distances(points.derived().eval());
    const auto core = detail::core_distances<Scalar>(dist, config.min_samples);
    const auto mr = detail::mutual_reachability<Scalar>(dist, core);
    const auto mst = detail::prim_mst<Scalar>(mr);

    // All mutual reachabilities zero means every point is identical: one
    // cluster holding everything, by the degenerate-geometry contract.
    bool all_zero = true;
    for (const auto& e : mst) {
        if (e.weight > 0) {
            all_zero = false;
            break;
        }
    }
    if (all_zero && n >= 2) {
        std::fill(proposal.labels.begin(), proposal.labels.end(), 0);
        proposal.cluster_count = 1;
        return proposal;
    }

    const auto dendro = detail::single_linkage<Scalar>(mst, n);
    const auto condensed = detail::condense_tree<Scalar>(dendro, n, config.min_cluster_size);
    const auto selected = detail::excess_of_mass(condensed, detail::cluster_stabilities(condensed));

    // A selected cluster owns every point that fell out of it or of any
    // condensed descendant.
    std::vector<std::vector<Eigen::Index>> groups;
    for (std::size_t c = 0; c < condensed.size(); ++c) {
        if (!selected[c]) continue;
        std::vector<Eigen::Index> points_of;
        std::vector<int> frontier{int(c)};
        while (!frontier.empty()) {
            const int d = frontier.back();
            frontier.pop_back();
            points_of.insert(points_of.end(), condensed[d].fallout_points.begin(),
                             condensed[d].fallout_points.end());
            frontier.insert(frontier.end(), condensed[d].children.begin(),
                            condensed[d].children.end());
        }
        std::sort(points_of.begin(), points_of.end());
        groups.push_back(std::move(points_of));
    }
    std::sort(groups.begin(), groups.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });

    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (Eigen::Index p : groups[g]) proposal.labels[std::size_t(p)] = int(g);
    }
    proposal.cluster_count = groups.size();
    return proposal;
}

} // namespace refinery
