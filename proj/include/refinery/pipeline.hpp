#pragma once

#include "refinery/corpus.hpp"
#include "refinery/providers.hpp"
#include "refinery/store.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace refinery {

struct CorpusConfig {
    std::string path;
    std::vector<std::string> keywords;  // empty = keep everything
    std::size_t max_per_user = 0;       // 0 = no cap
    bool dedup = false;
};

struct VectorizerConfig {
    std::size_t min_df = 2;
    Eigen::Index svd_rank = 50;
    std::string external_reduction;  // path to precomputed coordinates
};

struct RefineStageConfig {
    double tau = 0.0;  // 0 = pick via grid search
    std::vector<double> grid{0.75, 0.80, 0.85, 0.90};
    double label_tau = 0.85;
    std::size_t k_representatives = 5;
};

struct ProviderConfig {
    std::string kind = "mock";  // mock | remote
    std::string model = "mock-judge";
    double temperature = 0.0;
    Eigen::Index embed_dim = 64;  // mock embedding width
    std::string base_url;
    std::string api_key_env = "REFINERY_API_KEY";
    std::string embed_model = "embedding-small";
    double price_per_1k_prompt = 0.0;
    double price_per_1k_completion = 0.0;
    double max_cost = 0.0;  // 0 = unlimited
    std::string script;     // mock reply overrides, ndjson {key, reply}
    std::string cache_dir;  // empty = <run_dir>/cache
};

struct TemporalConfig {
    std::size_t window_days = 28;
};

struct PipelineConfig {
    CorpusConfig corpus;
    VectorizerConfig vectorizer;
    RefineStageConfig refine;
    ProviderConfig provider;
    TemporalConfig temporal;
    std::uint64_t seed = 42;
};

PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);

// Digest of the canonical serialized config; any knob change lands here, so
// a run directory can never silently mix settings.
std::string config_digest(const PipelineConfig& config);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

// Index into kStageNames, or throws ArgumentError.
std::size_t stage_index(const std::string& stage);

// Orchestrates the eight stages over one run directory. Construction wires
// the configured providers (validating remote credentials up front) and
// opens or initializes the store; each stage reads its inputs back from the
// store so a resumed run sees exactly what an uninterrupted one would.
class Pipeline {
public:
    Pipeline(PipelineConfig config, const std::filesystem::path& run_dir);

    // Runs every stage in [first, last] that is not already done. A pending
    // stage before `first` is a stage-order error.
    void execute(std::size_t first, std::size_t last);

    // Convenience: run everything that is still pending.
    void execute_all() { execute(0, kStageNames.size() - 1); }

    RunStore& store() { return *store_; }
    JudgeClient& judge() { return *judge_; }
    EmbedClient& embedder() { return *embedder_; }
    const PipelineConfig& config() const { return config_; }

    // Total judged spend recorded for this run, past processes included.
    double recorded_cost();

    // Stage that was executing when the last failure surfaced, if any.
    const std::string& failed_stage() const { return failed_stage_; }

private:
    void run_stage(std::size_t idx);
    void flush_usage();

    void stage_corpus();
    void stage_vectors();
    void stage_clusters();
    void stage_summaries();
    void stage_refined();
    void stage_labels();
    void stage_assignments();
    void stage_report();

    Corpus load_corpus_stage() const;

    PipelineConfig config_;
    std::unique_ptr<RunStore> store_;
    std::shared_ptr<ChatBackend> chat_backend_;
    std::shared_ptr<EmbedBackend> embed_backend_;
    std::unique_ptr<JudgeClient> judge_;
    std::unique_ptr<EmbedClient> embedder_;
    std::size_t flushed_judge_ = 0;
    std::size_t flushed_embed_ = 0;
    std::string failed_stage_;
};

void to_json(nlohmann::json& j, const Document& d);
void from_json(const nlohmann::json& j, Document& d);

} // namespace refinery
