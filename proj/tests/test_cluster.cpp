#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "refinery/cluster_grid.hpp"
#include "refinery/dbcv.hpp"
#include "refinery/errors.hpp"
#include "refinery/hdbscan.hpp"
#include "support.hpp"

#include <algorithm>
#include <random>
#include <set>

using namespace refinery;

namespace {

Eigen::MatrixXd two_line_blobs() {
    Eigen::MatrixXd pts(10, 1);
    for (int i = 0; i < 5; ++i) pts(i, 0) = 0.1 * i;
    for (int i = 0; i < 5; ++i) pts(5 + i, 0) = 10.0 + 0.1 * i;
    return pts;
}

// Partition as a set of member sets so relabelings compare equal. Noise
// points are kept as their own singleton sets keyed by index.
std::set<std::set<int>> partition_of(const std::vector<int>& labels) {
    std::map<int, std::set<int>> groups;
    std::set<std::set<int>> out;
    for (int i = 0; i < int(labels.size()); ++i) {
        if (labels[i] < 0) {
            out.insert({-1000 - i});
        } else {
            groups[labels[i]].insert(i);
        }
    }
    for (auto& [id, members] : groups) out.insert(members);
    return out;
}

} // namespace

TEST_CASE("run_hdbscan separates two well-spaced 1-d blobs") {
    ClusteringConfig cfg;
    cfg.min_cluster_size = 3;
    cfg.min_samples = 2;
    const auto proposal = run_hdbscan(two_line_blobs(), cfg);

    CHECK(proposal.cluster_count == 2);
    // ids are contiguous and ordered by smallest member, no noise
    CHECK(proposal.labels == std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
}

TEST_CASE("run_hdbscan argument and input validation") {
    const auto pts = two_line_blobs();
    ClusteringConfig cfg;

    SUBCASE("min_cluster_size below 2") {
        cfg.min_cluster_size = 1;
        CHECK_THROWS_AS(run_hdbscan(pts, cfg), ArgumentError);
    }
    SUBCASE("min_samples below 1") {
        cfg.min_samples = 0;
        CHECK_THROWS_AS(run_hdbscan(pts, cfg), ArgumentError);
    }
    SUBCASE("fewer points than min_cluster_size") {
        cfg.min_cluster_size = 11;
        CHECK_THROWS_WITH_AS(run_hdbscan(pts, cfg),
                             doctest::Contains("fewer points"), ArgumentError);
    }
    SUBCASE("unknown metric") {
        cfg.metric = "cosine";
        CHECK_THROWS_AS(run_hdbscan(pts, cfg), ArgumentError);
    }
    SUBCASE("unknown selection method") {
        cfg.selection_method = "leaf";
        CHECK_THROWS_AS(run_hdbscan(pts, cfg), ArgumentError);
    }
    SUBCASE("non-finite coordinates") {
        Eigen::MatrixXd bad = pts;
        bad(3, 0) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(run_hdbscan(bad, cfg), ValidationError);
    }
}

TEST_CASE("run_hdbscan collapses identical points into one cluster") {
    Eigen::MatrixXd pts = Eigen::MatrixXd::Constant(8, 2, 3.25);
    ClusteringConfig cfg;
    cfg.min_cluster_size = 3;
    const auto proposal = run_hdbscan(pts, cfg);
    CHECK(proposal.cluster_count == 1);
    for (int label : proposal.labels) CHECK(label == 0);
}

TEST_CASE("clusters respect the minimum size on random blob data") {
    for (unsigned seed : {1u, 2u, 3u, 4u}) {
        std::vector<int> truth;
        const auto pts = support::gaussian_blobs(
            {{0, 0}, {6, 0}, {0, 6}}, 15, 0.8, seed, &truth);
        ClusteringConfig cfg;
        cfg.min_cluster_size = 4;
        cfg.min_samples = 3;
        const auto proposal = run_hdbscan(pts, cfg);

        std::map<int, std::size_t> sizes;
        for (int label : proposal.labels) {
            if (label >= 0) ++sizes[label];
        }
        for (const auto& [id, count] : sizes) {
            CHECK(count >= cfg.min_cluster_size);
        }
        // labels are 0..k-1 with ids ordered by smallest member
        std::vector<int> firsts(sizes.size(), -1);
        for (int i = 0; i < int(proposal.labels.size()); ++i) {
            const int label = proposal.labels[i];
            if (label >= 0 && firsts[label] < 0) firsts[label] = i;
        }
        CHECK(std::is_sorted(firsts.begin(), firsts.end()));
        CHECK(firsts.empty() == false);
        CHECK(firsts.front() >= 0);
    }
}

TEST_CASE("run_hdbscan is equivariant under point permutation") {
    std::vector<int> truth;
    const auto pts = support::gaussian_blobs({{0, 0}, {7, 7}}, 12, 0.6, 9, &truth);

    std::vector<int> perm(pts.rows());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(4);
    std::shuffle(perm.begin(), perm.end(), rng);

    Eigen::MatrixXd shuffled(pts.rows(), pts.cols());
    for (int i = 0; i < int(perm.size()); ++i) shuffled.row(i) = pts.row(perm[i]);

    ClusteringConfig cfg;
    cfg.min_cluster_size = 4;
    cfg.min_samples = 3;
    const auto base = run_hdbscan(pts, cfg);
    const auto moved = run_hdbscan(shuffled, cfg);

    // undo the permutation before comparing partitions
    std::vector<int> unshuffled(perm.size());
    for (int i = 0; i < int(perm.size()); ++i) unshuffled[perm[i]] = moved.labels[i];
    CHECK(partition_of(base.labels) == partition_of(unshuffled));
}

TEST_CASE("prim_mst matches exhaustive minimum spanning weight") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(0.1, 5.0);
    for (int n = 3; n <= 6; ++n) {
        for (int trial = 0; trial < 8; ++trial) {
            Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
            for (int i = 0; i < n; ++i) {
                for (int j = i + 1; j < n; ++j) {
                    w(i, j) = w(j, i) = unif(rng);
                }
            }
            const auto edges = detail::prim_mst(w);
            REQUIRE(edges.size() == std::size_t(n - 1));
            double total = 0;
            for (const auto& e : edges) total += e.weight;
            CHECK(total == doctest::Approx(support::mst_weight_oracle(w)).epsilon(1e-12));
        }
    }
}

TEST_CASE("core distance uses the k-th nearest other point, clamped") {
    Eigen::MatrixXd pts(3, 1);
    pts << 0.0, 1.0, 3.0;
    Eigen::MatrixXd dist(3, 3);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) dist(i, j) = std::abs(pts(i, 0) - pts(j, 0));
    }
    const auto core1 = detail::core_distances(dist, 1);
    CHECK(core1 == std::vector<double>{1.0, 1.0, 2.0});
    const auto core2 = detail::core_distances(dist, 2);
    CHECK(core2 == std::vector<double>{3.0, 2.0, 3.0});
    // k beyond n-1 clamps to n-1 instead of failing
    CHECK(detail::core_distances(dist, 10) == core2);
}

TEST_CASE("dbcv_score prefers planted structure over shuffled labels") {
    for (unsigned seed = 1; seed <= 10; ++seed) {
        std::vector<int> truth;
        const auto pts = support::gaussian_blobs({{0, 0}, {8, 0}}, 14, 0.5, seed, &truth);
        const double planted = dbcv_score(pts, truth);

        std::vector<int> shuffled = truth;
        std::mt19937_64 rng(seed + 100);
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const double scrambled = dbcv_score(pts, shuffled);
        CHECK(planted > scrambled);
        CHECK(planted > 0.0);
    }
}

TEST_CASE("dbcv_score degenerate inputs") {
    const auto pts = two_line_blobs();
    SUBCASE("single cluster is undefined") {
        CHECK_THROWS_AS(dbcv_score(pts, std::vector<int>(10, 0)), UndefinedMetricError);
    }
    SUBCASE("singleton clusters do not count") {
        std::vector<int> labels{0, 0, 0, 0, 0, 1, -1, -1, -1, -1};
        CHECK_THROWS_AS(dbcv_score(pts, labels), UndefinedMetricError);
    }
    SUBCASE("label length mismatch") {
        CHECK_THROWS_AS(dbcv_score(pts, std::vector<int>(9, 0)), ValidationError);
    }
}

TEST_CASE("dbcv_score is invariant under similarity transforms") {
    std::vector<int> truth;
    const auto pts = support::gaussian_blobs({{0, 0}, {5, 5}}, 10, 0.4, 3, &truth);
    const double base = dbcv_score(pts, truth);
    const Eigen::MatrixXd moved = (pts.array() * 3.0 + 7.0).matrix();
    CHECK(dbcv_score(moved, truth) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("grid search rejects tiny inputs") {
    Eigen::MatrixXd pts(4, 2);
    pts.setRandom();
    CHECK_THROWS_WITH_AS(grid_search_clustering(pts),
                         doctest::Contains("at least 5 points"), ArgumentError);
}

TEST_CASE("size grid composes fixed values with clamped fractions") {
    CHECK(detail::resolve_size_grid(100) ==
          std::vector<std::size_t>{5, 10, 15, 20, 25});
    // n = 40: fractions give 2, 4, 8, 10; 10 collapses into the fixed value
    CHECK(detail::resolve_size_grid(40) ==
          std::vector<std::size_t>{2, 4, 5, 8, 10, 15});
}

TEST_CASE("grid search recovers three planted blobs") {
    std::vector<int> truth;
    const auto pts = support::gaussian_blobs(
        {{0, 0}, {10, 0}, {0, 10}}, 20, 0.5, 11, &truth);
    const auto result = grid_search_clustering(pts);

    CHECK(result.best_proposal.cluster_count == 3);
    CHECK(result.best_proposal.dbcv > 0.0);
    CHECK(support::adjusted_rand_index(result.best_proposal.labels, truth) >= 0.95);
    CHECK(result.trials.size() == detail::resolve_size_grid(60).size() * 4);

    // the winner is the first trial attaining the maximum score, which is
    // what "smaller min_cluster_size, then smaller min_samples" means in
    // the ascending enumeration order
    std::size_t expect = result.trials.size();
    for (std::size_t i = 0; i < result.trials.size(); ++i) {
        const auto& t = result.trials[i];
        if (t.failed) {
            CHECK(t.dbcv == -1.0);
            continue;
        }
        if (expect == result.trials.size() || t.dbcv > result.trials[expect].dbcv) expect = i;
    }
    CHECK(result.best == expect);
    CHECK(result.best_proposal.dbcv == result.trials[result.best].dbcv);
}
