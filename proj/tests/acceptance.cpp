#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "refinery/cluster_grid.hpp"
#include "refinery/dbcv.hpp"
#include "refinery/errors.hpp"
#include "refinery/metrics.hpp"
#include "refinery/pipeline.hpp"
#include "refinery/prompts.hpp"
#include "refinery/providers.hpp"
#include "refinery/refine.hpp"
#include "refinery/stats.hpp"
#include "refinery/store.hpp"
#include "refinery/temporal.hpp"

#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

using nlohmann::json;

namespace {

// Prints one verdict line per criterion so a run reads as a checklist.
struct CriterionPrinter : doctest::IReporter {
    std::string name;
    bool failed = false;

    explicit CriterionPrinter(const doctest::ContextOptions&) {}

    void report_query(const doctest::QueryData&) override {}
    void test_run_start() override {}
    void test_run_end(const doctest::TestRunStats&) override {}
    void test_case_start(const doctest::TestCaseData& data) override {
        name = data.m_name;
        failed = false;
    }
    void test_case_reenter(const doctest::TestCaseData&) override {}
    void test_case_end(const doctest::CurrentTestCaseStats& stats) override {
        const bool ok = !failed && stats.failure_flags == 0;
        const auto colon = name.find(':');
        const std::string head = colon == std::string::npos ? name : name.substr(0, colon);
        std::string desc = colon == std::string::npos ? "" : name.substr(colon + 1);
        if (!desc.empty() && desc.front() == ' ') desc.erase(desc.begin());
        std::cout << head << ": " << (ok ? "PASS" : "FAIL") << " - " << desc << std::endl;
    }
    void test_case_exception(const doctest::TestCaseException&) override { failed = true; }
    void subcase_start(const doctest::SubcaseSignature&) override {}
    void subcase_end() override {}
    void log_assert(const doctest::AssertData& data) override {
        if (data.m_failed) failed = true;
    }
    void log_message(const doctest::MessageData&) override {}
    void test_case_skipped(const doctest::TestCaseData&) override {}
};

REGISTER_LISTENER("criteria", 1, CriterionPrinter);

refinery::PipelineConfig fixture_config() {
    refinery::PipelineConfig cfg =
        refinery::load_config(std::filesystem::path(REFINERY_FIXTURE_DIR) / "demo_config.json");
    cfg.corpus.path =
        (std::filesystem::path(REFINERY_FIXTURE_DIR) / "demo_corpus.ndjson").string();
    return cfg;
}

std::map<std::string, std::string> stage_bytes(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const char* stage : refinery::kStageNames) {
        out[stage] = support::read_file(dir / (std::string(stage) + ".json"));
    }
    return out;
}

} // namespace

TEST_CASE("ACCEPTANCE 1: planted-structure recovery") {
    std::vector<int> truth;
    const Eigen::MatrixXd pts =
        support::gaussian_blobs({{0.0, 0.0}, {2.0, 0.0}, {0.0, 2.0}}, 50, 0.05, 42, &truth);

    const auto t0 = std::chrono::steady_clock::now();
    const auto result = refinery::grid_search_clustering(pts);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    CHECK(result.best_proposal.cluster_count == 3);
    CHECK(support::adjusted_rand_index(result.best_proposal.labels, truth) >= 0.95);
    CHECK(seconds < 10.0);
}

TEST_CASE("ACCEPTANCE 2: DBCV separates planted labels from random ones") {
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::vector<int> truth;
        const Eigen::MatrixXd pts = support::gaussian_blobs(
            {{0.0, 0.0}, {2.0, 0.0}, {0.0, 2.0}}, 50, 0.05, seed, &truth);

        std::mt19937_64 rng(7700 + seed);
        std::uniform_int_distribution<int> pick(0, 2);
        std::vector<int> shuffled(truth.size());
        for (auto& l : shuffled) l = pick(rng);

        const double planted = refinery::dbcv_score(pts, truth);
        const double random = refinery::dbcv_score(pts, shuffled);
        CAPTURE(seed);
        CHECK(planted > random);
        wins += planted > random ? 1 : 0;
    }
    CHECK(wins == 10);
}

TEST_CASE("ACCEPTANCE 3: silhouette and Davies-Bouldin match direct-formula oracles") {
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> coord(-5.0, 5.0);
    for (int instance = 0; instance < 20; ++instance) {
        const int n = 8 + int(rng() % 23);
        const int k = 2 + int(rng() % 3);
        const int dim = 2 + int(rng() % 2);

        Eigen::MatrixXd pts(n, dim);
        std::vector<int> labels(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            for (int d = 0; d < dim; ++d) pts(i, d) = coord(rng);
            labels[std::size_t(i)] = i < k ? i : int(rng() % std::uint64_t(k));
        }

        CAPTURE(instance);
        const auto rows = support::to_rows(pts);
        CHECK(std::abs(refinery::silhouette(pts, labels) -
                       support::silhouette_oracle(rows, labels)) <= 1e-9);
        CHECK(std::abs(refinery::davies_bouldin(pts, labels) -
                       support::davies_bouldin_oracle(rows, labels)) <= 1e-9);
    }

    // Hand cases: 1-D clusters {0,1} and {10,11}.
    Eigen::MatrixXd hand(4, 1);
    hand << 0.0, 1.0, 10.0, 11.0;
    const std::vector<int> hand_labels{0, 0, 1, 1};
    CHECK(refinery::silhouette(hand, hand_labels) ==
          doctest::Approx((9.5 / 10.5 + 8.5 / 9.5) / 2.0).epsilon(1e-12));
    CHECK(refinery::davies_bouldin(hand, hand_labels) == 0.1);
}

TEST_CASE("ACCEPTANCE 4: statistics match enumeration and hand evaluation") {
    // Mann-Whitney: exact p equals full enumeration for every shape with
    // n + m <= 12, on tied, distinct, and fully degenerate samples.
    std::mt19937_64 rng(404);
    for (std::size_t n = 1; n <= 11; ++n) {
        for (std::size_t m = 1; n + m <= 12; ++m) {
            const std::size_t total = n + m;

            std::vector<std::vector<double>> pools;
            std::vector<double> tied(total);
            for (auto& v : tied) v = double(rng() % 4);
            pools.push_back(tied);

            std::vector<double> distinct(total);
            for (std::size_t i = 0; i < total; ++i) distinct[i] = double(i + 1);
            std::shuffle(distinct.begin(), distinct.end(), rng);
            pools.push_back(distinct);

            pools.emplace_back(total, 5.0);

            for (const auto& pool : pools) {
                const std::vector<double> a(pool.begin(), pool.begin() + long(n));
                const std::vector<double> b(pool.begin() + long(n), pool.end());
                const auto r = refinery::mann_whitney_u(a, b);
                REQUIRE(r.p_value.has_value());
                CAPTURE(n);
                CAPTURE(m);
                CHECK(std::abs(*r.p_value - support::mwu_exact_p_oracle(a, b)) <= 1e-12);
            }
        }
    }

    const auto kw = refinery::kruskal_wallis({{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}});
    CHECK(std::abs(kw.statistic - 32.0 / 7.0) <= 1e-9);
    CHECK(kw.df == 2);
    REQUIRE(kw.p_value.has_value());
    CHECK(std::abs(*kw.p_value - 0.1017) <= 1e-4);

    Eigen::MatrixXd table(2, 2);
    table << 10, 20, 20, 10;
    const auto chi = refinery::chi_square_independence(table);
    CHECK(std::abs(chi.statistic - 6.667) <= 1e-3);
    CHECK(chi.df == 1);
    REQUIRE(chi.p_value.has_value());
    CHECK(std::abs(*chi.p_value - 0.0098) <= 1e-3);

    const auto kappa =
        refinery::cohens_kappa(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 0, 0, 0});
    CHECK(kappa.statistic == 0.5);
}

TEST_CASE("ACCEPTANCE 5: merging coarsens as tau decreases on random embeddings") {
    const std::vector<double> grid{0.75, 0.80, 0.85, 0.90};
    std::mt19937_64 rng(505);
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index k = 3 + Eigen::Index(rng() % 8);
        Eigen::MatrixXd emb(k, 6);
        for (Eigen::Index i = 0; i < k; ++i) {
            for (Eigen::Index d = 0; d < 6; ++d) emb(i, d) = gauss(rng);
            emb.row(i).normalize();
        }

        std::vector<std::vector<std::vector<std::size_t>>> parts;
        for (double tau : grid) parts.push_back(refinery::merge_components(emb, tau));

        CAPTURE(trial);
        for (std::size_t g = 0; g + 1 < grid.size(); ++g) {
            // Cluster count is non-decreasing in tau.
            CHECK(parts[g].size() <= parts[g + 1].size());

            // Every component at the higher tau sits inside one component
            // at the lower tau, so lowering tau only coarsens.
            std::map<std::size_t, std::size_t> comp_at_low;
            for (std::size_t c = 0; c < parts[g].size(); ++c) {
                for (std::size_t item : parts[g][c]) comp_at_low[item] = c;
            }
            for (const auto& comp : parts[g + 1]) {
                REQUIRE(!comp.empty());
                const std::size_t home = comp_at_low.at(comp.front());
                for (std::size_t item : comp) CHECK(comp_at_low.at(item) == home);
            }
        }
    }
}

TEST_CASE("ACCEPTANCE 6: end-to-end determinism on the bundled corpus") {
    support::TempDir tmp;
    const refinery::PipelineConfig cfg = fixture_config();

    {
        refinery::Pipeline p(cfg, tmp / "a");
        p.execute_all();
    }
    const auto reference = stage_bytes(tmp / "a");

    {
        refinery::Pipeline p(cfg, tmp / "b");
        p.execute_all();
    }
    CHECK(stage_bytes(tmp / "b") == reference);

    // Simulate a mid-run kill: stop after stage 4, leave the dead process's
    // lock and a torn temp file behind, then resume.
    {
        refinery::Pipeline p(cfg, tmp / "c");
        p.execute(0, 3);
    }
    support::write_file(tmp / "c" / "run.lock", "999999999\n");
    support::write_file(tmp / "c" / "05_refined.json.tmp", "{\"torn\":");
    {
        refinery::Pipeline p(cfg, tmp / "c");
        const auto& warnings = p.store().warnings();
        REQUIRE(warnings.size() == 1);
        CHECK(warnings[0] == "removed stale lock left by process 999999999");
        p.execute_all();
    }
    CHECK(stage_bytes(tmp / "c") == reference);
}

TEST_CASE("ACCEPTANCE 7: scripted incoherence discards mixed clusters, docs stay assigned") {
    support::TempDir tmp;
    const refinery::PipelineConfig cfg = fixture_config();

    // Probe pass: cluster the fixture and learn each cluster's summary and
    // representatives, which fix the coherence cache keys.
    refinery::Pipeline probe(cfg, tmp / "probe");
    probe.execute(0, 3);

    std::map<std::string, std::string> text_of;
    std::vector<std::string> ids;
    const json j1 = probe.store().load_stage("01_corpus");
    for (const auto& d : j1.at("documents")) {
        ids.push_back(d.at("id").get<std::string>());
        text_of[ids.back()] = d.at("text").get<std::string>();
    }
    const auto labels =
        probe.store().load_stage("03_clusters").at("labels").get<std::vector<int>>();
    REQUIRE(labels.size() == ids.size());

    // A cluster is "mixed" when most of its documents come from the
    // fixture's mixed-topic block.
    std::map<int, std::size_t> cluster_size, mix_size;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (labels[i] < 0) continue;
        ++cluster_size[labels[i]];
        if (ids[i].rfind("mix-", 0) == 0) ++mix_size[labels[i]];
    }
    std::set<int> mixed;
    for (const auto& [cid, size] : cluster_size) {
        if (mix_size[cid] * 2 > size) mixed.insert(cid);
    }
    REQUIRE(!mixed.empty());
    REQUIRE(mixed.size() < cluster_size.size());

    const json j4 = probe.store().load_stage("04_summaries");
    REQUIRE(j4.at("discarded").empty());

    std::string script;
    for (const auto& item : j4.at("kept")) {
        const int cid = item.at("cluster_id").get<int>();
        const std::string summary = item.at("summary").get<std::string>();
        std::vector<std::string> texts;
        for (const auto& rep : item.at("representative_ids")) {
            texts.push_back(text_of.at(rep.get<std::string>()));
        }
        const auto rendered = refinery::prompts::coherence(summary, texts);
        const refinery::JudgeRequest request{"coherence", rendered.system, rendered.user,
                                             probe.config().provider.model,
                                             probe.config().provider.temperature, json{}};
        const std::string reply = mixed.count(cid)
                                      ? "INCOHERENT: spans several unrelated topics"
                                      : "COHERENT: a single clear theme";
        script += json{{"key", probe.judge().cache_key_for(request)}, {"reply", reply}}.dump();
        script += "\n";
    }
    support::write_file(tmp / "verdicts.ndjson", script);

    refinery::PipelineConfig scripted = cfg;
    scripted.provider.script = (tmp / "verdicts.ndjson").string();
    refinery::Pipeline run(scripted, tmp / "scripted");
    run.execute_all();

    // The judge-independent prefix is unchanged, so cluster ids line up.
    CHECK(run.store().load_stage("03_clusters").at("labels").get<std::vector<int>>() == labels);

    std::set<int> discarded_ids, kept_ids;
    const json scripted4 = run.store().load_stage("04_summaries");
    for (const auto& item : scripted4.at("discarded")) {
        discarded_ids.insert(item.at("cluster_id").get<int>());
    }
    for (const auto& item : scripted4.at("kept")) {
        kept_ids.insert(item.at("cluster_id").get<int>());
    }
    CHECK(discarded_ids == mixed);
    CHECK(discarded_ids.size() + kept_ids.size() == cluster_size.size());

    std::set<std::string> allowed;
    const json j6 = run.store().load_stage("06_labels");
    for (const auto& label : j6.at("refined").at("labels")) {
        allowed.insert(label.get<std::string>());
    }
    allowed.insert("None of the above");

    const auto assignments = run.store()
                                 .load_stage("07_assignments")
                                 .at("assignments")
                                 .get<std::map<std::string, std::string>>();
    CHECK(assignments.size() == ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (labels[i] < 0 || !mixed.count(labels[i])) continue;
        CAPTURE(ids[i]);
        REQUIRE(assignments.count(ids[i]) == 1);
        CHECK(allowed.count(assignments.at(ids[i])) == 1);
    }
}

TEST_CASE("ACCEPTANCE 8: temporal windowing and the balanced-snapshot path") {
    // densest_window agrees with a brute-force scan on random series.
    std::mt19937_64 rng(808);
    for (int series = 0; series < 10; ++series) {
        refinery::Corpus corpus;
        std::vector<std::int64_t> days;
        auto add = [&](std::int64_t day) {
            refinery::Document d;
            d.id = "d" + std::to_string(corpus.size());
            d.text = "post";
            d.timestamp = day * 86400 + std::int64_t(rng() % 86400);
            corpus.documents.push_back(d);
            days.push_back(day);
        };
        for (int i = 0; i < 60; ++i) add(18200 + std::int64_t(rng() % 201));
        const std::int64_t burst = 18200 + std::int64_t(rng() % 190);
        for (int i = 0; i < 40; ++i) add(burst + std::int64_t(rng() % 9));

        for (std::size_t window : {std::size_t(7), std::size_t(28)}) {
            const auto chosen = refinery::densest_window(corpus, window);
            const auto oracle = support::densest_window_oracle(days, window);
            CAPTURE(series);
            CAPTURE(window);
            CHECK(chosen.post_count == oracle.count);
            CHECK(chosen.start_day == oracle.start_day);
            CHECK(chosen.end_day == chosen.start_day + std::int64_t(window) - 1);
        }
    }

    auto platform_corpus = [](const std::string& prefix, std::size_t count) {
        refinery::Corpus corpus;
        for (std::size_t i = 0; i < count; ++i) {
            refinery::Document d;
            d.id = prefix + std::to_string(i);
            d.text = "post";
            corpus.documents.push_back(d);
        }
        return corpus;
    };
    auto themed = [](const refinery::Corpus& corpus, std::size_t first_theme_count) {
        std::map<std::string, std::string> out;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            out[corpus.documents[i].id] = i < first_theme_count ? "T1" : "T2";
        }
        return out;
    };

    // Dependent themes survive volume matching with a decisive p-value.
    {
        const refinery::Corpus a = platform_corpus("a", 50);
        const refinery::Corpus b = platform_corpus("b", 200);
        const auto [ma, mb] = refinery::match_volume(a, b, 9);
        CHECK(ma.size() == 50);
        CHECK(mb.size() == 50);

        // The smaller platform passes through intact; the larger one's themes
        // are looked up by id because matching subsamples it.
        std::map<std::string, std::string> assign_b, all_b = themed(b, 20);
        for (const auto& d : mb.documents) assign_b[d.id] = all_b.at(d.id);

        const auto table =
            refinery::theme_platform_table(themed(ma, 45), assign_b, {"T1", "T2"}, "x", "y");
        CHECK(table.counts.col(0).sum() == 50.0);
        CHECK(table.counts.col(1).sum() == 50.0);
        const auto result = refinery::chi_square_independence(table.counts);
        REQUIRE(result.p_value.has_value());
        CHECK(*result.p_value < 0.01);
    }

    // Proportional rows score an essentially zero statistic.
    {
        const refinery::Corpus a = platform_corpus("p", 50);
        const refinery::Corpus b = platform_corpus("q", 50);
        const auto [ma, mb] = refinery::match_volume(a, b, 9);
        const auto table =
            refinery::theme_platform_table(themed(ma, 30), themed(mb, 30), {"T1", "T2"});
        const auto result = refinery::chi_square_independence(table.counts);
        CHECK(result.statistic < 1e-9);
        REQUIRE(result.p_value.has_value());
        CHECK(*result.p_value == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("ACCEPTANCE 9: cold cache writes one usage record per judge call, warm writes none") {
    support::TempDir tmp;
    auto mock = std::make_shared<refinery::MockChatBackend>();
    refinery::ClientOptions options;
    options.cache_dir = (tmp / "cache").string();

    const std::vector<std::vector<std::string>> topics = {
        {"solar panels and inverters", "battery storage sizing"},
        {"fresh pasta with garlic", "slow simmered marinara"},
        {"trail running shoes", "ridge hike pacing"}};

    std::vector<std::string> summaries;
    std::vector<refinery::CoherenceVerdict> verdicts;
    {
        refinery::JudgeClient cold(mock, options);
        for (const auto& texts : topics) summaries.push_back(cold.summarize(texts));
        for (std::size_t i = 0; i < topics.size(); ++i) {
            verdicts.push_back(cold.verify_coherence(summaries[i], topics[i]));
        }
        CHECK(cold.ledger().size() == 6);
    }

    refinery::JudgeClient warm(mock, options);
    for (std::size_t i = 0; i < topics.size(); ++i) {
        CHECK(warm.summarize(topics[i]) == summaries[i]);
        const auto verdict = warm.verify_coherence(summaries[i], topics[i]);
        CHECK(verdict.coherent == verdicts[i].coherent);
        CHECK(verdict.rationale == verdicts[i].rationale);
    }
    CHECK(warm.ledger().empty());
}
