#pragma once

#include "refinery/dbcv.hpp"
#include "refinery/errors.hpp"
#include "refinery/hdbscan.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

namespace refinery {

struct GridTrial {
    ClusteringConfig config;
    double dbcv = -1.0;
    bool failed = false;
};

struct GridSearchResult {
    std::vector<GridTrial> trials;
    std::size_t best = 0;             // index into trials
    ClusterProposal best_proposal;
};

namespace detail {

// min_cluster_size grid: {5, 10, 15} plus the fractions of N, rounded half
// up and clamped to [2, N]; duplicates evaluated once.
inline std::vector<std::size_t> resolve_size_grid(std::size_t n) {
    std::set<std::size_t> sizes{5, 10, 15};
    for (double f : {0.05, 0.1, 0.2, 0.25}) {
        const auto s = std::size_t(std::floor(f * double(n) + 0.5));
        sizes.insert(std::clamp<std::size_t>(s, 2, n));
    }
    return {sizes.begin(), sizes.end()};
}

} // namespace detail

// Evaluates every (min_cluster_size, min_samples) pair, scoring each
// proposal with DBCV. Failed trials (clustering error or undefined score)
// carry the sentinel -1 and never win. Ties prefer smaller min_cluster_size,
// then smaller min_samples.
template <typename Derived>
GridSearchResult grid_search_clustering(const Eigen::MatrixBase<Derived>& points) {
    const std::size_t n = std::size_t(points.rows());
    if (n < 5) {
        throw ArgumentError("grid_search_clustering: need at least 5 points");
    }

    const auto sizes = detail::resolve_size_grid(n);
    const std::size_t samples[] = {2, 3, 5, 10};

    GridSearchResult result;
    bool have_best = false;
    for (std::size_t mcs : sizes) {
        for (std::size_t ms : samples) {
            GridTrial trial;
            trial.config.min_cluster_size = mcs;
            trial.config.min_samples = ms;

            ClusterProposal proposal;
            try {
                proposal = run_hdbscan(points, trial.config);
                proposal.dbcv = dbcv_score(points, proposal.labels);
                trial.dbcv = proposal.dbcv;
            } catch (const Error&) {
                trial.failed = true;
                trial.dbcv = -1.0;
            }

            result.trials.push_back(trial);
            if (!trial.failed) {
                const bool better =
                    !have_best || trial.dbcv > result.trials[result.best].dbcv ||
                    (trial.dbcv == result.trials[result.best].dbcv &&
                     (mcs < result.trials[result.best].config.min_cluster_size ||
                      (mcs == result.trials[result.best].config.min_cluster_size &&
                       ms < result.trials[result.best].config.min_samples)));
                if (better) {
                    result.best = result.trials.size() - 1;
                    result.best_proposal = std::move(proposal);
                    have_best = true;
                }
            }
        }
    }
    if (!have_best) {
        throw UndefinedMetricError("grid_search_clustering: no configuration produced a scorable clustering");
    }
    return result;
}

} // namespace refinery
