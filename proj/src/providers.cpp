#include "refinery/providers.hpp"

#include "refinery/prompts.hpp"
#include "refinery/sha256.hpp"
#include "refinery/text.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <semaphore>
#include <set>
#include <thread>
#include <unordered_set>

namespace refinery {

namespace {

std::string format_temperature(double t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", t);
    return buf;
}

std::size_t word_count(const std::string& s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : s) {
        const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (!ws && !in_word) ++n;
        in_word = !ws;
    }
    return n;
}

std::string first_n_words(const std::string& s, std::size_t n) {
    std::string out;
    std::size_t words = 0;
    bool in_word = false;
    for (char c : s) {
        const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (!ws && !in_word) {
            if (words == n) break;
            ++words;
            if (!out.empty()) out += ' ';
        }
        in_word = !ws;
        if (in_word) out += c;
    }
    return out;
}

std::string collapse_whitespace(const std::string& s) {
    std::string out;
    bool pending = false;
    for (char c : s) {
        const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (ws) {
            pending = !out.empty();
        } else {
            if (pending) out += ' ';
            pending = false;
            out += c;
        }
    }
    return out;
}

std::string title_case(const std::string& token) {
    std::string out = token;
    if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = char(out[0] - 'a' + 'A');
    return out;
}

// Strips leading separator punctuation (space, colon, hyphens, UTF-8 dashes)
// left over after cutting a keyword prefix.
std::string strip_separators(std::string s) {
    for (;;) {
        if (s.size() >= 3 && s[0] == '\xe2' && s[1] == '\x80' &&
            (s[2] == '\x93' || s[2] == '\x94')) {
            s.erase(0, 3);
            continue;
        }
        if (!s.empty() && (s[0] == ' ' || s[0] == '\t' || s[0] == '\r' || s[0] == '\n' ||
                           s[0] == ':' || s[0] == ';' || s[0] == ',' || s[0] == '-')) {
            s.erase(0, 1);
            continue;
        }
        return s;
    }
}

constexpr const char* kNoneOfTheAbove = "None of the above";

bool is_none_choice(const std::string& s) {
    return text::to_lower_ascii(text::trim(s)) == "none of the above";
}

std::set<std::string> content_tokens(const std::string& s, bool drop_hashtag_terms = false) {
    text::TokenizeOptions opts;
    opts.drop_hashtag_terms = drop_hashtag_terms;
    std::set<std::string> out;
    for (auto& t : text::tokenize(s, opts)) {
        if (!text::default_stopwords().count(t)) out.insert(t);
    }
    return out;
}

} // namespace

std::string judge_cache_key(const std::string& endpoint, const JudgeRequest& request) {
    Sha256 h;
    for (const std::string& part :
         {endpoint, request.model, request.template_id, request.rendered_prompt(),
          format_temperature(request.temperature)}) {
        h.update(part);
        h.update("\x1f");
    }
    return h.hex_digest();
}

std::string embed_cache_key(const std::string& endpoint, const std::string& model,
                            const std::string& text) {
    Sha256 h;
    for (const std::string& part : {endpoint, model, std::string("embed"), text}) {
        h.update(part);
        h.update("\x1f");
    }
    return h.hex_digest();
}

// ---------------------------------------------------------------------------
// MockChatBackend

void MockChatBackend::script(const std::string& cache_key, const std::string& reply) {
    script_[cache_key] = reply;
}

void MockChatBackend::load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open script file: " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("script line " + std::to_string(line_no) + ": " + e.what());
        }
        script_[j.at("key").get<std::string>()] = j.at("reply").get<std::string>();
    }
}

ChatReply MockChatBackend::complete(const JudgeRequest& request) {
    const std::string key = judge_cache_key(endpoint(), request);
    auto it = script_.find(key);
    const std::string content = it != script_.end() ? it->second : heuristic_reply(request);
    ChatReply reply;
    reply.content = content;
    reply.prompt_tokens = word_count(request.rendered_prompt());
    reply.completion_tokens = word_count(content);
    reply.latency_ms = 0.0;
    return reply;
}

std::string MockChatBackend::heuristic_reply(const JudgeRequest& request) const {
    const auto& slots = request.slots;

    if (request.template_id == "summarize") {
        const auto texts = slots.at("texts").get<std::vector<std::string>>();
        const auto tops = text::top_tokens(texts, 3);
        switch (tops.size()) {
            case 0:
                return "These posts share one broad everyday theme.";
            case 1:
                return "These posts center on " + tops[0] + ".";
            case 2:
                return "These posts center on " + tops[0] + " and " + tops[1] + ".";
            default:
                return "These posts center on " + tops[0] + ", " + tops[1] + ", and " + tops[2] +
                       ".";
        }
    }

    if (request.template_id == "coherence") {
        const auto summary_tokens = content_tokens(slots.at("summary").get<std::string>());
        const auto texts = slots.at("texts").get<std::vector<std::string>>();
        std::size_t hits = 0;
        for (const auto& t : texts) {
            const auto tokens = content_tokens(t);
            for (const auto& s : summary_tokens) {
                if (tokens.count(s)) {
                    ++hits;
                    break;
                }
            }
        }
        const std::string ratio = std::to_string(hits) + " of " + std::to_string(texts.size());
        if (hits * 2 >= texts.size()) {
            return "COHERENT: " + ratio + " posts share the summary's key terms.";
        }
        return "INCOHERENT: only " + ratio + " posts share the summary's key terms.";
    }

    if (request.template_id == "label") {
        // Skip the carrier words of this mock's own summary template so the
        // label is built from topic terms, not scaffolding.
        static const std::set<std::string> scaffold{"these", "posts",    "center", "centers",
                                                    "share", "broad",    "everyday", "theme",
                                                    "themes", "one"};
        std::string out;
        int used = 0;
        for (const auto& t : text::top_tokens({slots.at("summary").get<std::string>()}, 12)) {
            if (scaffold.count(t)) continue;
            if (!out.empty()) out += ' ';
            out += title_case(t);
            if (++used == 3) break;
        }
        if (out.empty()) return "General Discussion";
        return out;
    }

    if (request.template_id == "consolidate") {
        const auto labels = slots.at("labels").get<std::vector<std::string>>();
        bool all_same = true;
        for (const auto& l : labels) {
            if (l != labels.front()) {
                all_same = false;
                break;
            }
        }
        if (all_same) return labels.front();
        const auto tops = text::top_tokens(labels, 3);
        if (tops.empty()) return labels.front();
        std::string out;
        for (const auto& t : tops) {
            if (!out.empty()) out += ' ';
            out += title_case(t);
        }
        return out;
    }

    if (request.template_id == "assign") {
        // Hashtag-only mentions do not count as topical evidence; a post whose
        // sole tie to a label is a trailing tag falls through to the reserved
        // option.
        const auto tokens = content_tokens(slots.at("text").get<std::string>(), true);
        const auto choices = slots.at("choices").get<std::vector<std::string>>();
        std::size_t best = choices.size();
        std::size_t best_overlap = 0;
        for (std::size_t i = 0; i < choices.size(); ++i) {
            if (is_none_choice(choices[i])) continue;
            std::size_t overlap = 0;
            for (const auto& t : content_tokens(choices[i])) {
                if (tokens.count(t)) ++overlap;
            }
            if (overlap > best_overlap) {
                best_overlap = overlap;
                best = i;
            }
        }
        if (best < choices.size()) return choices[best];
        for (const auto& c : choices) {
            if (is_none_choice(c)) return c;
        }
        return choices.back();
    }

    throw ProviderError("mock judge: unknown template \"" + request.template_id + "\"");
}

// ---------------------------------------------------------------------------
// HashEmbedBackend

EmbedReply HashEmbedBackend::embed(const std::vector<std::string>& texts) {
    EmbedReply reply;
    reply.vectors = Eigen::MatrixXd::Zero(Eigen::Index(texts.size()), dim_);
    std::size_t total_tokens = 0;
    const std::uint64_t mix = seed_ * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        auto tokens = text::tokenize(texts[i]);
        if (tokens.empty()) tokens.push_back(text::trim(texts[i]));
        total_tokens += tokens.size();
        for (const auto& tok : tokens) {
            const std::uint64_t h = fnv1a64(tok) ^ mix;
            const Eigen::Index bucket = Eigen::Index(h % std::uint64_t(dim_));
            const double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
            reply.vectors(Eigen::Index(i), bucket) += sign;
        }
        const double norm = reply.vectors.row(Eigen::Index(i)).norm();
        if (norm > 0) {
            reply.vectors.row(Eigen::Index(i)) /= norm;
        } else {
            // Opposite-sign collisions cancelled everything; fall back to a
            // single deterministic bucket so the row stays a unit vector.
            const std::uint64_t h = fnv1a64(texts[i]) ^ mix;
            reply.vectors(Eigen::Index(i), Eigen::Index(h % std::uint64_t(dim_))) = 1.0;
        }
    }
    reply.prompt_tokens = total_tokens;
    reply.latency_ms = 0.0;
    return reply;
}

// ---------------------------------------------------------------------------
// Remote backends

namespace {

struct RemoteState {
    RemoteOptions options;
    httplib::Client client;
    std::counting_semaphore<64> slots;

    // The https check must run before the client member is built: the
    // TLS-free httplib client throws its own error on https URLs.
    static RemoteOptions checked(RemoteOptions opts) {
        if (opts.base_url.rfind("https://", 0) == 0) {
            throw ConfigError("remote provider: TLS endpoints are not supported; "
                              "use a plain-HTTP endpoint or a local gateway");
        }
        return opts;
    }

    explicit RemoteState(RemoteOptions opts)
        : options(checked(std::move(opts))),
          client(options.base_url),
          slots(std::min(std::max(options.max_in_flight, 1), 64)) {
        if (!client.is_valid()) {
            throw ConfigError("remote provider: invalid endpoint URL \"" + options.base_url + "\"");
        }
        client.set_connection_timeout(options.timeout_seconds);
        client.set_read_timeout(options.timeout_seconds);
        if (!options.api_key.empty()) {
            client.set_default_headers({{"Authorization", "Bearer " + options.api_key}});
        }
    }

    // POSTs with bounded concurrency, retrying transient failures with
    // exponential backoff. Returns the body of a 200 response.
    std::string post_with_retry(const std::string& path, const std::string& body,
                                double& latency_ms) {
        slots.acquire();
        struct Release {
            std::counting_semaphore<64>& s;
            ~Release() { s.release(); }
        } release{slots};

        std::string last_error;
        for (int attempt = 0; attempt < std::max(options.max_attempts, 1); ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(options.backoff_initial_ms << (attempt - 1)));
            }
            const auto start = std::chrono::steady_clock::now();
            auto res = client.Post(path, body, "application/json");
            latency_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
            if (res && res->status == 200) return res->body;
            if (res && res->status != 429 && res->status < 500) {
                throw ProviderError("remote provider: status " + std::to_string(res->status) +
                                    " from " + path);
            }
            last_error = res ? "status " + std::to_string(res->status)
                             : "connection error " + httplib::to_string(res.error());
        }
        throw ProviderError("remote provider: " + last_error + " after " +
                            std::to_string(options.max_attempts) + " attempts to " + path);
    }
};

} // namespace

struct RemoteChatBackend::Impl : RemoteState {
    using RemoteState::RemoteState;
};

RemoteChatBackend::RemoteChatBackend(RemoteOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

RemoteChatBackend::~RemoteChatBackend() = default;

std::string RemoteChatBackend::endpoint() const {
    return impl_->options.base_url + impl_->options.chat_path;
}

ChatReply RemoteChatBackend::complete(const JudgeRequest& request) {
    nlohmann::json body{
        {"model", request.model},
        {"temperature", request.temperature},
        {"messages",
         nlohmann::json::array({nlohmann::json{{"role", "system"}, {"content", request.system_prompt}},
                                nlohmann::json{{"role", "user"}, {"content", request.user_prompt}}})},
    };

    double latency_ms = 0.0;
    const std::string raw = impl_->post_with_retry(impl_->options.chat_path, body.dump(), latency_ms);

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("remote provider: unparseable reply: ") + e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty() ||
        !j["choices"][0].contains("message") || !j["choices"][0]["message"].contains("content")) {
        throw ProviderError("remote provider: reply lacks choices[0].message.content");
    }

    ChatReply reply;
    reply.content = j["choices"][0]["message"]["content"].get<std::string>();
    reply.latency_ms = latency_ms;
    if (j.contains("usage") && j["usage"].is_object()) {
        reply.prompt_tokens = j["usage"].value("prompt_tokens", 0u);
        reply.completion_tokens = j["usage"].value("completion_tokens", 0u);
    } else {
        reply.prompt_tokens = word_count(request.rendered_prompt());
        reply.completion_tokens = word_count(reply.content);
    }
    return reply;
}

struct RemoteEmbedBackend::Impl : RemoteState {
    using RemoteState::RemoteState;
};

RemoteEmbedBackend::RemoteEmbedBackend(RemoteOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

RemoteEmbedBackend::~RemoteEmbedBackend() = default;

std::string RemoteEmbedBackend::endpoint() const {
    return impl_->options.base_url + impl_->options.embed_path;
}

std::string RemoteEmbedBackend::model() const { return impl_->options.embed_model; }

EmbedReply RemoteEmbedBackend::embed(const std::vector<std::string>& texts) {
    nlohmann::json body{{"model", impl_->options.embed_model}, {"input", texts}};

    double latency_ms = 0.0;
    const std::string raw =
        impl_->post_with_retry(impl_->options.embed_path, body.dump(), latency_ms);

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("remote provider: unparseable reply: ") + e.what());
    }
    if (!j.contains("data") || !j["data"].is_array() || j["data"].size() != texts.size()) {
        throw ProviderError("remote provider: embedding reply row count mismatch");
    }

    EmbedReply reply;
    reply.latency_ms = latency_ms;
    std::size_t total = 0;
    for (const auto& t : texts) total += word_count(t);
    reply.prompt_tokens = total;

    Eigen::Index dim = -1;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto v = j["data"][i].at("embedding").get<std::vector<double>>();
        if (dim < 0) {
            dim = Eigen::Index(v.size());
            reply.vectors.resize(Eigen::Index(texts.size()), dim);
        }
        if (Eigen::Index(v.size()) != dim) {
            throw ProviderError("remote provider: inconsistent embedding widths");
        }
        for (Eigen::Index c = 0; c < dim; ++c) reply.vectors(Eigen::Index(i), c) = v[std::size_t(c)];
        const double norm = reply.vectors.row(Eigen::Index(i)).norm();
        if (norm > 0) reply.vectors.row(Eigen::Index(i)) /= norm;
    }
    return reply;
}

// ---------------------------------------------------------------------------
// JudgeClient

JudgeClient::JudgeClient(std::shared_ptr<ChatBackend> backend, ClientOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
    if (!options_.cache_dir.empty()) {
        std::filesystem::create_directories(options_.cache_dir);
    }
}

std::string JudgeClient::cache_key_for(const JudgeRequest& request) const {
    return judge_cache_key(backend_->endpoint(), request);
}

std::optional<std::string> JudgeClient::cache_lookup(const std::string& key) {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    if (options_.cache_dir.empty()) return std::nullopt;
    const auto path = options_.cache_dir / (key + ".json");
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
        nlohmann::json j = nlohmann::json::parse(in);
        std::string content = j.at("content").get<std::string>();
        cache_[key] = content;
        return content;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;  // corrupt entry: treat as a miss, it will be rewritten
    }
}

void JudgeClient::cache_store(const std::string& key, const std::string& content) {
    std::lock_guard lock(mutex_);
    cache_[key] = content;
    if (options_.cache_dir.empty()) return;
    const auto path = options_.cache_dir / (key + ".json");
    const auto tmp = options_.cache_dir / (key + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << nlohmann::json{{"content", content}}.dump() << '\n';
    }
    std::filesystem::rename(tmp, path);
}

std::string JudgeClient::cached_call(const JudgeRequest& request) {
    const std::string key = judge_cache_key(backend_->endpoint(), request);
    if (auto hit = cache_lookup(key)) return *hit;

    {
        std::lock_guard lock(mutex_);
        double total = 0;
        for (const auto& r : ledger_) total += r.estimated_cost;
        if (total >= options_.max_cost) {
            throw CostLimitError("judge spend " + std::to_string(total) +
                                 " reached the configured ceiling");
        }
    }

    const ChatReply reply = backend_->complete(request);
    UsageRecord record;
    record.operation = request.template_id;
    record.prompt_tokens = reply.prompt_tokens;
    record.completion_tokens = reply.completion_tokens;
    record.estimated_cost = double(reply.prompt_tokens) / 1000.0 * options_.price_per_1k_prompt +
                            double(reply.completion_tokens) / 1000.0 * options_.price_per_1k_completion;
    record.latency_ms = reply.latency_ms;
    {
        std::lock_guard lock(mutex_);
        ledger_.push_back(record);
    }
    cache_store(key, reply.content);
    return reply.content;
}

std::string JudgeClient::summarize(const std::vector<std::string>& texts) {
    if (texts.empty() || texts.size() > options_.k_max) {
        throw ArgumentError("summarize: need between 1 and " + std::to_string(options_.k_max) +
                            " texts");
    }
    auto rendered = prompts::summarize(texts);
    JudgeRequest request{"summarize", rendered.system, rendered.user, options_.model,
                         options_.temperature, nlohmann::json{{"texts", texts}}};

    std::string content = text::trim(cached_call(request));
    if (content.empty()) {
        request.user_prompt += prompts::reprompt_suffix("summarize");
        content = text::trim(cached_call(request));
    }
    if (content.empty()) {
        throw ParseError("summarize: provider returned an empty summary twice");
    }
    return collapse_whitespace(content);
}

namespace {

std::optional<CoherenceVerdict> parse_verdict(const std::string& reply) {
    const std::string trimmed = text::trim(reply);
    const std::string lower = text::to_lower_ascii(trimmed);
    CoherenceVerdict v;
    std::size_t keyword_len = 0;
    if (lower.rfind("incoherent", 0) == 0) {
        v.coherent = false;
        keyword_len = 10;
    } else if (lower.rfind("coherent", 0) == 0) {
        v.coherent = true;
        keyword_len = 8;
    } else {
        return std::nullopt;
    }
    v.rationale = text::trim(strip_separators(trimmed.substr(keyword_len)));
    if (!v.coherent && v.rationale.empty()) return std::nullopt;
    return v;
}

} // namespace

CoherenceVerdict JudgeClient::verify_coherence(const std::string& summary,
                                               const std::vector<std::string>& texts) {
    if (text::trim(summary).empty()) throw ArgumentError("verify_coherence: empty summary");
    if (texts.empty()) throw ArgumentError("verify_coherence: no texts");

    auto rendered = prompts::coherence(summary, texts);
    JudgeRequest request{"coherence", rendered.system, rendered.user, options_.model,
                         options_.temperature,
                         nlohmann::json{{"summary", summary}, {"texts", texts}}};

    auto verdict = parse_verdict(cached_call(request));
    if (!verdict) {
        request.user_prompt += prompts::reprompt_suffix("coherence");
        verdict = parse_verdict(cached_call(request));
    }
    if (!verdict) {
        throw ParseError("verify_coherence: reply matched neither COHERENT nor INCOHERENT "
                         "after one reprompt");
    }
    return *verdict;
}

std::string JudgeClient::generate_label(const std::string& summary) {
    if (text::trim(summary).empty()) throw ArgumentError("generate_label: empty summary");

    auto rendered = prompts::label(summary);
    JudgeRequest request{"label", rendered.system, rendered.user, options_.model,
                         options_.temperature, nlohmann::json{{"summary", summary}}};

    std::string content = collapse_whitespace(text::trim(cached_call(request)));
    if (content.empty()) {
        request.user_prompt += prompts::reprompt_suffix("label");
        content = collapse_whitespace(text::trim(cached_call(request)));
    }
    if (content.empty()) throw ParseError("generate_label: empty reply twice");

    if (word_count(content) > 8) {
        const std::string truncated = first_n_words(content, 8);
        std::lock_guard lock(mutex_);
        warnings_.push_back("label \"" + content + "\" exceeded 8 words; truncated to \"" +
                            truncated + "\"");
        return truncated;
    }
    return content;
}

std::string JudgeClient::consolidate_labels(const std::vector<std::string>& labels) {
    if (labels.size() < 2) {
        throw ArgumentError("consolidate_labels: need at least 2 labels");
    }

    auto rendered = prompts::consolidate(labels);
    JudgeRequest request{"consolidate", rendered.system, rendered.user, options_.model,
                         options_.temperature, nlohmann::json{{"labels", labels}}};

    std::string content = collapse_whitespace(text::trim(cached_call(request)));
    if (content.empty()) {
        request.user_prompt += prompts::reprompt_suffix("consolidate");
        content = collapse_whitespace(text::trim(cached_call(request)));
    }
    if (content.empty()) throw ParseError("consolidate_labels: empty reply twice");

    if (word_count(content) > 8) {
        const std::string truncated = first_n_words(content, 8);
        std::lock_guard lock(mutex_);
        warnings_.push_back("consolidated label \"" + content + "\" exceeded 8 words; truncated");
        return truncated;
    }
    return content;
}

std::string JudgeClient::assign_label(const std::string& text,
                                      const std::vector<std::string>& labels) {
    if (labels.empty()) throw ArgumentError("assign_label: no labels");

    std::vector<std::string> choices = labels;
    bool has_none = false;
    for (const auto& c : choices) {
        if (is_none_choice(c)) {
            has_none = true;
            break;
        }
    }
    if (!has_none) choices.push_back(kNoneOfTheAbove);

    auto rendered = prompts::assign(text, choices);
    JudgeRequest request{"assign", rendered.system, rendered.user, options_.model,
                         options_.temperature,
                         nlohmann::json{{"text", text}, {"choices", choices}}};

    auto match = [&](const std::string& reply) -> std::optional<std::string> {
        const std::string folded = text::to_lower_ascii(text::trim(reply));
        for (const auto& c : choices) {
            if (text::to_lower_ascii(text::trim(c)) == folded) return c;
        }
        return std::nullopt;
    };

    auto choice = match(cached_call(request));
    if (!choice) {
        request.user_prompt += prompts::reprompt_suffix("assign");
        choice = match(cached_call(request));
    }
    if (!choice) {
        throw ParseError("assign_label: reply was not one of the presented choices after one "
                         "reprompt");
    }
    return *choice;
}

std::vector<UsageRecord> JudgeClient::ledger() const {
    std::lock_guard lock(mutex_);
    return ledger_;
}

double JudgeClient::total_cost() const {
    std::lock_guard lock(mutex_);
    double total = 0;
    for (const auto& r : ledger_) total += r.estimated_cost;
    return total;
}

std::vector<std::string> JudgeClient::warnings() const {
    std::lock_guard lock(mutex_);
    return warnings_;
}

// ---------------------------------------------------------------------------
// EmbedClient

EmbedClient::EmbedClient(std::shared_ptr<EmbedBackend> backend, ClientOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
    if (!options_.cache_dir.empty()) {
        std::filesystem::create_directories(options_.cache_dir);
    }
}

Eigen::MatrixXd EmbedClient::embed(const std::vector<std::string>& texts) {
    for (const auto& t : texts) {
        if (text::trim(t).empty()) {
            throw ArgumentError("embed: empty text in batch");
        }
    }

    std::vector<std::string> keys(texts.size());
    std::vector<std::string> missing;
    std::vector<std::string> missing_keys;
    {
        std::lock_guard lock(mutex_);
        std::unordered_set<std::string> queued;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            keys[i] = embed_cache_key(backend_->endpoint(), backend_->model(), texts[i]);
            if (cache_.count(keys[i]) || queued.count(keys[i])) continue;
            bool on_disk = false;
            if (!options_.cache_dir.empty()) {
                std::ifstream in(options_.cache_dir / (keys[i] + ".json"));
                if (in) {
                    try {
                        nlohmann::json j = nlohmann::json::parse(in);
                        cache_[keys[i]] = j.at("vector").get<std::vector<double>>();
                        on_disk = true;
                    } catch (const nlohmann::json::exception&) {
                    }
                }
            }
            if (!on_disk) {
                missing.push_back(texts[i]);
                missing_keys.push_back(keys[i]);
                queued.insert(keys[i]);
            }
        }
    }

    if (!missing.empty()) {
        {
            std::lock_guard lock(mutex_);
            double total = 0;
            for (const auto& r : ledger_) total += r.estimated_cost;
            if (total >= options_.max_cost) {
                throw CostLimitError("embedding spend reached the configured ceiling");
            }
        }
        EmbedReply reply = backend_->embed(missing);
        if (std::size_t(reply.vectors.rows()) != missing.size()) {
            throw ProviderError("embed: backend returned wrong row count");
        }
        UsageRecord record;
        record.operation = "embed";
        record.prompt_tokens = reply.prompt_tokens;
        record.estimated_cost =
            double(reply.prompt_tokens) / 1000.0 * options_.price_per_1k_prompt;
        record.latency_ms = reply.latency_ms;

        std::lock_guard lock(mutex_);
        ledger_.push_back(record);
        for (std::size_t i = 0; i < missing.size(); ++i) {
            Eigen::VectorXd row = reply.vectors.row(Eigen::Index(i));
            const double norm = row.norm();
            if (norm > 0) row /= norm;
            std::vector<double> v(row.data(), row.data() + row.size());
            cache_[missing_keys[i]] = v;
            if (!options_.cache_dir.empty()) {
                const auto path = options_.cache_dir / (missing_keys[i] + ".json");
                const auto tmp = options_.cache_dir / (missing_keys[i] + ".tmp");
                {
                    std::ofstream out(tmp, std::ios::trunc);
                    out << nlohmann::json{{"vector", v}}.dump() << '\n';
                }
                std::filesystem::rename(tmp, path);
            }
        }
    }

    std::lock_guard lock(mutex_);
    Eigen::Index dim = -1;
    for (const auto& k : keys) {
        const auto& v = cache_.at(k);
        if (dim < 0) dim = Eigen::Index(v.size());
        if (Eigen::Index(v.size()) != dim) {
            throw ValidationError("embed: cached vectors have inconsistent widths");
        }
    }
    Eigen::MatrixXd out(Eigen::Index(texts.size()), std::max<Eigen::Index>(dim, 0));
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto& v = cache_.at(keys[i]);
        for (Eigen::Index c = 0; c < dim; ++c) out(Eigen::Index(i), c) = v[std::size_t(c)];
    }
    return out;
}

std::vector<UsageRecord> EmbedClient::ledger() const {
    std::lock_guard lock(mutex_);
    return ledger_;
}

double EmbedClient::total_cost() const {
    std::lock_guard lock(mutex_);
    double total = 0;
    for (const auto& r : ledger_) total += r.estimated_cost;
    return total;
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const UsageRecord& r) {
    j = nlohmann::json{{"operation", r.operation},
                       {"prompt_tokens", r.prompt_tokens},
                       {"completion_tokens", r.completion_tokens},
                       {"estimated_cost", r.estimated_cost},
                       {"latency_ms", r.latency_ms}};
}

void from_json(const nlohmann::json& j, UsageRecord& r) {
    r.operation = j.value("operation", "");
    r.prompt_tokens = j.at("prompt_tokens").get<std::size_t>();
    r.completion_tokens = j.value("completion_tokens", std::size_t(0));
    r.estimated_cost = j.value("estimated_cost", 0.0);
    r.latency_ms = j.value("latency_ms", 0.0);
}

void to_json(nlohmann::json& j, const CoherenceVerdict& v) {
    j = nlohmann::json{{"coherent", v.coherent}, {"rationale", v.rationale}};
}

void from_json(const nlohmann::json& j, CoherenceVerdict& v) {
    v.coherent = j.at("coherent").get<bool>();
    v.rationale = j.value("rationale", "");
}

} // namespace refinery
