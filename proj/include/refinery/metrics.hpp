#pragma once

#include "refinery/distance.hpp"
#include "refinery/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <map>
#include <string>
#include <vector>

namespace refinery {

namespace detail {

// Distinct non-noise labels in ascending order; label -1 marks noise.
inline std::vector<int> cluster_ids(const std::vector<int>& labels) {
    std::vector<int> ids;
    for (int l : labels) {
        if (l >= 0 && std::find(ids.begin(), ids.end(), l) == ids.end()) ids.push_back(l);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

inline std::map<int, std::vector<Eigen::Index>> members_by_cluster(const std::vector<int>& labels) {
    std::map<int, std::vector<Eigen::Index>> m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= 0) m[labels[i]].push_back(static_cast<Eigen::Index>(i));
    }
    return m;
}

} // namespace detail

// Mean silhouette over non-noise points, Euclidean distance. Points in
// singleton clusters contribute s = 0, the usual convention.
template <typename Derived>
typename Derived::Scalar silhouette(const Eigen::MatrixBase<Derived>& points,
                                    const std::vector<int>& labels) {
    using Scalar = typename Derived::Scalar;
    if (static_cast<std::size_t>(points.rows()) != labels.size()) {
        throw ValidationError("silhouette: labels length does not match point count");
    }
    const auto members = detail::members_by_cluster(labels);
    if (members.size() < 2) {
        throw UndefinedMetricError("silhouette: need at least 2 clusters");
    }

    std::vector<Eigen::Index> included;
    for (const auto& [id, rows] : members) included.insert(included.end(), rows.begin(), rows.end());

    Scalar total = 0;
    for (const auto& [id, rows] : members) {
        for (Eigen::Index i : rows) {
            if (rows.size() == 1) continue;  // s = 0
            Scalar a = 0;
            for (Eigen::Index j : rows) {
                if (j != i) a += (points.row(i) - points.row(j)).norm();
            }
            a /= Scalar(rows.size() - 1);

            Scalar b = std::numeric_limits<Scalar>::infinity();
            for (const auto& [other_id, other_rows] : members) {
                if (other_id == id) continue;
                Scalar mean = 0;
                for (Eigen::Index j : other_rows) mean += (points.row(i) - points.row(j)).norm();
                mean /= Scalar(other_rows.size());
                b = std::min(b, mean);
            }
            const Scalar denom = std::max(a, b);
            total += denom > 0 ? (b - a) / denom : Scalar(0);
        }
    }
    return total / Scalar(included.size());
}

// DB = (1/k) sum_i max_{j != i} (sigma_i + sigma_j) / d(c_i, c_j) with sigma
// the mean member-to-centroid distance. Coincident centroids make the ratio
// undefined and are reported as an error naming the pair.
template <typename Derived>
typename Derived::Scalar davies_bouldin(const Eigen::MatrixBase<Derived>& points,
                                        const std::vector<int>& labels) {
    using Scalar = typename Derived::Scalar;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    if (static_cast<std::size_t>(points.rows()) != labels.size()) {
        throw ValidationError("davies_bouldin: labels length does not match point count");
    }
    const auto members = detail::members_by_cluster(labels);
    if (members.size() < 2) {
        throw UndefinedMetricError("davies_bouldin: need at least 2 clusters");
    }

    std::vector<int> ids;
    std::vector<Vector> centroids;
    std::vector<Scalar> scatter;
    for (const auto& [id, rows] : members) {
        Vector c = Vector::Zero(points.cols());
        for (Eigen::Index i : rows) c += points.row(i).transpose();
        c /= Scalar(rows.size());
        Scalar s = 0;
        for (Eigen::Index i : rows) s += (points.row(i).transpose() - c).norm();
        s /= Scalar(rows.size());
        ids.push_back(id);
        centroids.push_back(std::move(c));
        scatter.push_back(s);
    }

    const std::size_t k = ids.size();
    Scalar db = 0;
    for (std::size_t i = 0; i < k; ++i) {
        Scalar worst = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j == i) continue;
            const Scalar dist = (centroids[i] - centroids[j]).norm();
            if (dist == 0) {
                throw UndefinedMetricError("davies_bouldin: clusters " + std::to_string(ids[i]) +
                                           " and " + std::to_string(ids[j]) +
                                           " have coincident centroids");
            }
            worst = std::max(worst, (scatter[i] + scatter[j]) / dist);
        }
        db += worst;
    }
    return db / Scalar(k);
}

template <typename Scalar>
struct CoherenceTable {
    std::map<int, Scalar> by_cluster;  // mean pairwise cosine, clusters with >= 2 members
    std::vector<int> skipped;          // clusters too small to score
};

// Mean cosine similarity over all unordered member pairs, per cluster.
template <typename Derived>
CoherenceTable<typename Derived::Scalar> intra_cluster_coherence(
    const Eigen::MatrixBase<Derived>& embeddings, const std::vector<int>& labels) {
    using Scalar = typename Derived::Scalar;
    if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
        throw ValidationError("intra_cluster_coherence: labels length does not match row count");
    }
    CoherenceTable<Scalar> table;
    for (const auto& [id, rows] : detail::members_by_cluster(labels)) {
        if (rows.size() < 2) {
            table.skipped.push_back(id);
            continue;
        }
        Scalar sum = 0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t j = i + 1; j < rows.size(); ++j) {
                sum += detail::cosine_similarity(embeddings.row(rows[i]), embeddings.row(rows[j]));
                ++pairs;
            }
        }
        table.by_cluster[id] = sum / Scalar(pairs);
    }
    return table;
}

} // namespace refinery
