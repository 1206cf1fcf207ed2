#pragma once

#include "refinery/distance.hpp"
#include "refinery/errors.hpp"
#include "refinery/hdbscan.hpp"
#include "refinery/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

namespace refinery {

namespace detail {

// All-points core distance: the inverse generalized mean of 1/d over same-
// cluster neighbours, with exponent r = embedding dimension. Evaluated in
// log space; large r would overflow the direct power sum.
template <typename Scalar>
std::vector<Scalar> all_points_core_distance(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& dist,
    const std::vector<Eigen::Index>& members, Scalar r) {
    const std::size_t n = members.size();
    std::vector<Scalar> apts(n);
    std::vector<Scalar> log_terms;
    for (std::size_t i = 0; i < n; ++i) {
        log_terms.clear();
        bool coincident = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const Scalar d = dist(members[i], members[j]);
            if (d <= 0) {
                coincident = true;
                break;
            }
            log_terms.push_back(-r * std::log(d));
        }
        if (coincident) {
            apts[i] = 0;  // infinite density at zero distance
            continue;
        }
        const Scalar peak = *std::max_element(log_terms.begin(), log_terms.end());
        Scalar sum = 0;
        for (Scalar t : log_terms) sum += std::exp(t - peak);
        const Scalar log_mean = peak + std::log(sum) - std::log(Scalar(n - 1));
        apts[i] = std::exp(-log_mean / r);
    }
    return apts;
}

} // namespace detail

// Density-based cluster validity (Moulavi et al.): per-cluster sparseness
// from the internal edges of the mutual-reachability MST, separation as the
// minimum mutual reachability to any other cluster, combined into a
// size-weighted sum over clusters. Noise counts in the denominator only.
// Clusters need >= 2 members to be scorable; fewer than 2 such clusters is
// an undefined score.
template <typename Derived>
double dbcv_score(const Eigen::MatrixBase<Derived>& points, const std::vector<int>& labels) {
    using Scalar = double;
    if (static_cast<std::size_t>(points.rows()) != labels.size()) {
        throw ValidationError("dbcv_score: labels length does not match point count");
    }
    if (!points.allFinite()) {
        throw ValidationError("dbcv_score: non-finite coordinates");
    }

    const auto members = detail::members_by_cluster(labels);
    std::vector<std::vector<Eigen::Index>> clusters;
    for (const auto& [id, rows] : members) {
        if (rows.size() >= 2) clusters.push_back(rows);
    }
    if (clusters.size() < 2) {
        throw UndefinedMetricError("dbcv_score: need at least 2 clusters with 2+ members");
    }

    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dist =
        detail::pairwise_distances(points.derived().template cast<Scalar>().eval());
    const Scalar r = Scalar(points.cols());

    std::vector<std::vector<Scalar>> apts(clusters.size());
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        apts[c] = detail::all_points_core_distance<Scalar>(dist, clusters[c], r);
    }

    std::vector<Scalar> sparseness(clusters.size());
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        const auto& rows = clusters[c];
        const std::size_t m = rows.size();
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> mrd(m, m);
        for (std::size_t i = 0; i < m; ++i) {
            mrd(i, i) = 0;
            for (std::size_t j = i + 1; j < m; ++j) {
                const Scalar w = std::max({apts[c][i], apts[c][j], dist(rows[i], rows[j])});
                mrd(i, j) = w;
                mrd(j, i) = w;
            }
        }
        const auto mst = detail::prim_mst<Scalar>(mrd);
        std::vector<int> degree(m, 0);
        for (const auto& e : mst) {
            ++degree[e.a];
            ++degree[e.b];
        }
        Scalar internal_max = -1, overall_max = 0;
        for (const auto& e : mst) {
            overall_max = std::max(overall_max, e.weight);
            if (degree[e.a] > 1 && degree[e.b] > 1) internal_max = std::max(internal_max, e.weight);
        }
        // Path graphs of two nodes have no internal edge; fall back to the
        // largest edge so sparseness stays defined.
        sparseness[c] = internal_max >= 0 ? internal_max : overall_max;
    }

    double score = 0;
    const double n_total = double(labels.size());
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        Scalar separation = std::numeric_limits<Scalar>::infinity();
        for (std::size_t i = 0; i < clusters[c].size(); ++i) {
            for (std::size_t o = 0; o < clusters.size(); ++o) {
                if (o == c) continue;
                for (std::size_t j = 0; j < clusters[o].size(); ++j) {
                    const Scalar w = std::max(
                        {apts[c][i], apts[o][j], dist(clusters[c][i], clusters[o][j])});
                    separation = std::min(separation, w);
                }
            }
        }
        const Scalar denom = std::max(separation, sparseness[c]);
        const Scalar validity = denom > 0 ? (separation - sparseness[c]) / denom : Scalar(0);
        score += double(clusters[c].size()) / n_total * double(validity);
    }
    return score;
}

} // namespace refinery
