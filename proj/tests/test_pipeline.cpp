#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "refinery/errors.hpp"
#include "refinery/pipeline.hpp"

#include "support.hpp"

#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using nlohmann::json;
using refinery::Pipeline;
using refinery::PipelineConfig;

namespace {

PipelineConfig fixture_config() {
    PipelineConfig cfg =
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

// Usage records with the wall-clock latency stripped, sorted for multiset
// comparison across runs.
std::vector<std::string> stable_usage(const std::filesystem::path& run_dir) {
    std::istringstream in(support::read_file(run_dir / "usage.ndjson"));
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        j.erase("latency_ms");
        out.push_back(j.dump());
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

TEST_CASE("config digest pins every knob") {
    const PipelineConfig base = fixture_config();
    const std::string d0 = refinery::config_digest(base);
    CHECK(d0.size() == 64);

    // Serialization is canonical, so the digest survives a JSON round trip.
    CHECK(refinery::config_digest(refinery::config_from_json(refinery::config_to_json(base))) ==
          d0);

    auto differs = [&](auto mutate) {
        PipelineConfig c = base;
        mutate(c);
        return refinery::config_digest(c) != d0;
    };
    CHECK(differs([](PipelineConfig& c) { c.seed = 43; }));
    CHECK(differs([](PipelineConfig& c) { c.corpus.keywords = {"solar"}; }));
    CHECK(differs([](PipelineConfig& c) { c.corpus.dedup = !c.corpus.dedup; }));
    CHECK(differs([](PipelineConfig& c) { c.vectorizer.min_df = 3; }));
    CHECK(differs([](PipelineConfig& c) { c.vectorizer.svd_rank = 21; }));
    CHECK(differs([](PipelineConfig& c) { c.refine.label_tau = 0.9; }));
    CHECK(differs([](PipelineConfig& c) { c.refine.grid = {0.8}; }));
    CHECK(differs([](PipelineConfig& c) { c.provider.model = "mock-judge-2"; }));
    CHECK(differs([](PipelineConfig& c) { c.provider.embed_dim = 32; }));
    CHECK(differs([](PipelineConfig& c) { c.temporal.window_days = 7; }));
}

TEST_CASE("stage files are byte-identical across runs and across an interruption") {
    support::TempDir tmp;
    const PipelineConfig cfg = fixture_config();

    {
        Pipeline p(cfg, tmp / "a");
        p.execute_all();
        CHECK(p.failed_stage().empty());
        CHECK(p.store().resume().empty());
    }
    const auto reference = stage_bytes(tmp / "a");
    for (const auto& [stage, text] : reference) {
        CAPTURE(stage);
        CHECK(!text.empty());
    }

    const json report = json::parse(reference.at("08_report"));
    CHECK(report.at("cluster_count").get<int>() >= 2);
    CHECK(report.at("labels").size() == report.at("label_count").get<std::size_t>());
    CHECK(report.at("hdbscan").at("dbcv").get<double>() > 0.0);
    CHECK(report.at("metrics").at("provider_space").contains("silhouette"));
    CHECK(report.at("coherence").contains("original_mean"));
    CHECK(report.at("coherence").contains("refined_mean"));
    CHECK(report.at("assignment_counts").is_object());

    // Same config, fresh directory: every stage file comes out byte-equal.
    {
        Pipeline p(cfg, tmp / "b");
        p.execute_all();
    }
    CHECK(stage_bytes(tmp / "b") == reference);

    // Interrupt after the summary stage, then resume in a new process image.
    {
        Pipeline p(cfg, tmp / "c");
        p.execute(0, 3);
    }
    CHECK(std::filesystem::exists(tmp / "c" / "04_summaries.json"));
    CHECK(!std::filesystem::exists(tmp / "c" / "05_refined.json"));
    const std::string partial_usage = support::read_file(tmp / "c" / "usage.ndjson");

    {
        Pipeline p(cfg, tmp / "c");
        CHECK(p.store().resume() == "05_refined");
        p.execute_all();
    }
    CHECK(stage_bytes(tmp / "c") == reference);

    // The usage ledger is append-only across the interruption and ends up
    // with exactly the records an uninterrupted run writes.
    const std::string full_usage = support::read_file(tmp / "c" / "usage.ndjson");
    REQUIRE(full_usage.size() >= partial_usage.size());
    CHECK(full_usage.substr(0, partial_usage.size()) == partial_usage);
    CHECK(stable_usage(tmp / "c") == stable_usage(tmp / "a"));
}

TEST_CASE("execute validates its range and enforces stage order") {
    support::TempDir tmp;
    Pipeline p(fixture_config(), tmp / "run");

    CHECK_THROWS_WITH_AS(p.execute(3, 2), doctest::Contains("out of bounds"),
                         refinery::ArgumentError);
    CHECK_THROWS_WITH_AS(p.execute(0, 8), doctest::Contains("out of bounds"),
                         refinery::ArgumentError);
    CHECK_THROWS_WITH_AS(p.execute(2, 7),
                         doctest::Contains("01_corpus has not run yet; this verb starts at "
                                           "03_clusters"),
                         refinery::StoreError);

    p.execute(0, 0);
    CHECK(p.store().resume() == "02_vectors");
    CHECK_THROWS_WITH_AS(p.execute(2, 7), doctest::Contains("02_vectors has not run yet"),
                         refinery::StoreError);

    // A range that ends before the first pending stage is a no-op.
    p.execute(0, 0);
    CHECK(p.store().resume() == "02_vectors");

    p.execute(1, 2);
    CHECK(p.store().manifest().stages.at("03_clusters").status ==
          refinery::StageStatus::done);
    CHECK(p.store().resume() == "04_summaries");
}

TEST_CASE("a run directory refuses a different configuration") {
    support::TempDir tmp;
    const PipelineConfig cfg = fixture_config();
    {
        Pipeline p(cfg, tmp / "run");
        p.execute(0, 0);
    }

    PipelineConfig other = cfg;
    other.seed = 7;
    CHECK_THROWS_WITH_AS(Pipeline(other, tmp / "run"),
                         doctest::Contains("different configuration"), refinery::StoreError);

    // The matching config reopens and picks up where the run left off.
    Pipeline again(cfg, tmp / "run");
    CHECK(again.store().resume() == "02_vectors");
}

TEST_CASE("provider misconfiguration is rejected before the run directory is touched") {
    support::TempDir tmp;
    PipelineConfig cfg = fixture_config();
    const std::filesystem::path run = tmp / "run";

    SUBCASE("unknown provider kind") {
        cfg.provider.kind = "llama";
        CHECK_THROWS_WITH_AS(Pipeline(cfg, run),
                             doctest::Contains("provider kind must be \"mock\" or \"remote\""),
                             refinery::ConfigError);
        CHECK(!std::filesystem::exists(run));
    }
    SUBCASE("remote without a base URL") {
        cfg.provider.kind = "remote";
        CHECK_THROWS_WITH_AS(Pipeline(cfg, run),
                             doctest::Contains("requires provider.base_url"),
                             refinery::ConfigError);
        CHECK(!std::filesystem::exists(run));
    }
    SUBCASE("remote without credentials in the environment") {
        cfg.provider.kind = "remote";
        cfg.provider.base_url = "http://127.0.0.1:9";
        cfg.provider.api_key_env = "REFINERY_TEST_ABSENT_KEY";
        ::unsetenv("REFINERY_TEST_ABSENT_KEY");
        CHECK_THROWS_WITH_AS(
            Pipeline(cfg, run),
            doctest::Contains("requires credentials in $REFINERY_TEST_ABSENT_KEY"),
            refinery::ConfigError);
        CHECK(!std::filesystem::exists(run));
    }
    SUBCASE("remote with credentials constructs without contacting the endpoint") {
        cfg.provider.kind = "remote";
        cfg.provider.base_url = "http://127.0.0.1:9";
        cfg.provider.api_key_env = "REFINERY_TEST_PRESENT_KEY";
        ::setenv("REFINERY_TEST_PRESENT_KEY", "test-key", 1);
        {
            Pipeline p(cfg, run);
            CHECK(std::filesystem::exists(run / "manifest.json"));
        }
        ::unsetenv("REFINERY_TEST_PRESENT_KEY");
    }
}

TEST_CASE("a stage failure is recorded in the manifest and on the pipeline") {
    support::TempDir tmp;
    PipelineConfig cfg = fixture_config();
    cfg.corpus.path = (tmp / "missing.ndjson").string();

    Pipeline p(cfg, tmp / "run");
    CHECK_THROWS_AS(p.execute_all(), refinery::IoError);
    CHECK(p.failed_stage() == "01_corpus");
    CHECK(p.store().manifest().stages.at("01_corpus").status ==
          refinery::StageStatus::failed);
    CHECK(p.store().resume() == "01_corpus");
}

TEST_CASE("matrix payloads round-trip through JSON") {
    Eigen::MatrixXd m(2, 3);
    m << 1.5, -2.25, 0.0, 4.0, 5.5, -6.0;
    const json j = refinery::matrix_to_json(m);
    CHECK(j == json::parse("[[1.5,-2.25,0.0],[4.0,5.5,-6.0]]"));

    const Eigen::MatrixXd back = refinery::matrix_from_json(j);
    REQUIRE(back.rows() == 2);
    REQUIRE(back.cols() == 3);
    CHECK((back - m).norm() == 0.0);

    CHECK(refinery::matrix_from_json(json::array()).size() == 0);
    CHECK_THROWS_WITH_AS(refinery::matrix_from_json(json{{"rows", 2}}),
                         doctest::Contains("not an array"), refinery::ParseError);
    CHECK_THROWS_WITH_AS(refinery::matrix_from_json(json::parse("[[1,2],[3]]")),
                         doctest::Contains("ragged"), refinery::ParseError);
}

TEST_CASE("stage_index maps names to pipeline positions") {
    CHECK(refinery::stage_index("01_corpus") == 0);
    CHECK(refinery::stage_index("05_refined") == 4);
    CHECK(refinery::stage_index("08_report") == 7);
    CHECK_THROWS_WITH_AS(refinery::stage_index("report"), doctest::Contains("unknown stage"),
                         refinery::ArgumentError);
}

TEST_CASE("load_config rejects unreadable or invalid files") {
    support::TempDir tmp;
    CHECK_THROWS_AS(refinery::load_config(tmp / "absent.json"), refinery::IoError);

    support::write_file(tmp / "bad.json", "{not json");
    CHECK_THROWS_WITH_AS(refinery::load_config(tmp / "bad.json"),
                         doctest::Contains("not valid JSON"), refinery::ConfigError);
}
