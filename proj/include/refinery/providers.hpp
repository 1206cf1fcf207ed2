#pragma once

#include "refinery/errors.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace refinery {

struct JudgeRequest {
    std::string template_id;  // summarize | coherence | label | consolidate | assign
    std::string system_prompt;
    std::string user_prompt;
    std::string model;
    double temperature = 0.0;

    // Structured copies of the prompt inputs. The mock backend's heuristics
    // read these instead of re-parsing prompt text; they are not part of the
    // cache key.
    nlohmann::json slots;

    std::string rendered_prompt() const { return system_prompt + "\n\n" + user_prompt; }
};

struct CoherenceVerdict {
    bool coherent = false;
    std::string rationale;
};

struct UsageRecord {
    std::string operation;  // template id, or "embed"
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    double estimated_cost = 0.0;
    double latency_ms = 0.0;
};

struct ChatReply {
    std::string content;
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    double latency_ms = 0.0;
};

struct EmbedReply {
    Eigen::MatrixXd vectors;  // one row per input text
    std::size_t prompt_tokens = 0;
    double latency_ms = 0.0;
};

// Cache key for one judge call. Identical requests against the same endpoint
// always map to the same key, which is what makes interrupted runs re-billable
// for free.
std::string judge_cache_key(const std::string& endpoint, const JudgeRequest& request);

std::string embed_cache_key(const std::string& endpoint, const std::string& model,
                            const std::string& text);

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string endpoint() const = 0;
    virtual ChatReply complete(const JudgeRequest& request) = 0;
};

class EmbedBackend {
public:
    virtual ~EmbedBackend() = default;
    virtual std::string endpoint() const = 0;
    virtual std::string model() const = 0;
    virtual EmbedReply embed(const std::vector<std::string>& texts) = 0;
};

// Deterministic offline judge. Replies come from a script table keyed by
// cache key when present, otherwise from fixed heuristics over the request
// slots (top term-frequency tokens, token overlap). Pure function of the
// request and the table.
class MockChatBackend : public ChatBackend {
public:
    std::string endpoint() const override { return "mock://judge"; }
    ChatReply complete(const JudgeRequest& request) override;

    void script(const std::string& cache_key, const std::string& reply);
    void load_script(const std::filesystem::path& path);  // ndjson {key, reply}

private:
    std::string heuristic_reply(const JudgeRequest& request) const;
    std::map<std::string, std::string> script_;
};

// Seeded-hash bag-of-words embedder: each token lands in one of `dim`
// signed buckets; rows are L2-normalized. Deterministic per seed, zero
// network. This is both the test embedder and the mock-provider embedding
// space.
class HashEmbedBackend : public EmbedBackend {
public:
    explicit HashEmbedBackend(std::uint64_t seed = 0, Eigen::Index dim = 64)
        : seed_(seed), dim_(dim) {}

    std::string endpoint() const override { return "mock://embed"; }
    std::string model() const override { return "hash-64"; }
    EmbedReply embed(const std::vector<std::string>& texts) override;

private:
    std::uint64_t seed_;
    Eigen::Index dim_;
};

struct RemoteOptions {
    std::string base_url;  // e.g. "http://localhost:8089"
    std::string chat_path = "/v1/chat/completions";
    std::string embed_path = "/v1/embeddings";
    std::string api_key;  // resolved from the environment by the caller
    std::string embed_model = "embedding-small";
    int max_attempts = 3;
    int backoff_initial_ms = 250;
    int timeout_seconds = 60;
    int max_in_flight = 4;
};

// Chat-completion client over plain HTTP. Retries transient failures
// (connection errors, 429, 5xx) with exponential backoff; at most
// `max_in_flight` requests are on the wire at once.
class RemoteChatBackend : public ChatBackend {
public:
    explicit RemoteChatBackend(RemoteOptions options);
    ~RemoteChatBackend();

    std::string endpoint() const override;
    ChatReply complete(const JudgeRequest& request) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

class RemoteEmbedBackend : public EmbedBackend {
public:
    explicit RemoteEmbedBackend(RemoteOptions options);
    ~RemoteEmbedBackend();

    std::string endpoint() const override;
    std::string model() const override;
    EmbedReply embed(const std::vector<std::string>& texts) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct ClientOptions {
    std::string model = "mock-judge";
    double temperature = 0.0;
    std::size_t k_max = 7;  // summarize accepts at most this many texts
    double price_per_1k_prompt = 0.0;
    double price_per_1k_completion = 0.0;
    double max_cost = std::numeric_limits<double>::infinity();
    std::filesystem::path cache_dir;  // empty = in-memory cache only
};

// Judge operations over a ChatBackend: prompt rendering, response parsing
// with one reprompt, a persistent response cache, a usage ledger, and the
// spend guardrail. Cache hits perform no backend call and append no record.
class JudgeClient {
public:
    JudgeClient(std::shared_ptr<ChatBackend> backend, ClientOptions options = {});

    std::string summarize(const std::vector<std::string>& texts);
    CoherenceVerdict verify_coherence(const std::string& summary,
                                      const std::vector<std::string>& texts);
    std::string generate_label(const std::string& summary);
    std::string consolidate_labels(const std::vector<std::string>& labels);
    std::string assign_label(const std::string& text, const std::vector<std::string>& labels);

    std::vector<UsageRecord> ledger() const;
    double total_cost() const;
    std::vector<std::string> warnings() const;

    // Most texts one summarize call accepts; callers batching more must fold.
    std::size_t summarize_limit() const { return options_.k_max; }

    // Cache key the next call for these arguments would use; lets tests and
    // tools script the mock by digest.
    std::string cache_key_for(const JudgeRequest& request) const;

private:
    std::string cached_call(const JudgeRequest& request);
    std::optional<std::string> cache_lookup(const std::string& key);
    void cache_store(const std::string& key, const std::string& content);

    std::shared_ptr<ChatBackend> backend_;
    ClientOptions options_;
    mutable std::mutex mutex_;
    std::map<std::string, std::string> cache_;
    std::vector<UsageRecord> ledger_;
    std::vector<std::string> warnings_;
};

// Embedding operations over an EmbedBackend with the same cache and ledger
// behaviour as JudgeClient. Rows come back L2-normalized.
class EmbedClient {
public:
    EmbedClient(std::shared_ptr<EmbedBackend> backend, ClientOptions options = {});

    Eigen::MatrixXd embed(const std::vector<std::string>& texts);

    std::vector<UsageRecord> ledger() const;
    double total_cost() const;

private:
    std::shared_ptr<EmbedBackend> backend_;
    ClientOptions options_;
    mutable std::mutex mutex_;
    std::map<std::string, std::vector<double>> cache_;
    std::vector<UsageRecord> ledger_;
};

void to_json(nlohmann::json& j, const UsageRecord& r);
void from_json(const nlohmann::json& j, UsageRecord& r);
void to_json(nlohmann::json& j, const CoherenceVerdict& v);
void from_json(const nlohmann::json& j, CoherenceVerdict& v);

} // namespace refinery
