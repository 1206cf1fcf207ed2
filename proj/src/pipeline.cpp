#include "refinery/pipeline.hpp"

#include "refinery/cluster_grid.hpp"
#include "refinery/embedding.hpp"
#include "refinery/metrics.hpp"
#include "refinery/refine.hpp"
#include "refinery/sha256.hpp"
#include "refinery/stats.hpp"
#include "refinery/svd.hpp"
#include "refinery/tfidf.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>

namespace refinery {

namespace {

constexpr const char* kUsageFile = "usage.ndjson";

template <typename T>
void get_if_present(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

void to_json(nlohmann::json& j, const Document& d) {
    j = nlohmann::json{{"id", d.id},
                       {"text", d.text},
                       {"author", d.author},
                       {"timestamp", d.timestamp},
                       {"platform", d.platform}};
}

void from_json(const nlohmann::json& j, Document& d) {
    d.id = j.at("id").get<std::string>();
    d.text = j.at("text").get<std::string>();
    d.author = j.value("author", "unknown");
    d.timestamp = j.value("timestamp", std::int64_t(0));
    d.platform = j.value("platform", "unknown");
}

PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    if (j.contains("corpus")) {
        const auto& s = j.at("corpus");
        get_if_present(s, "path", c.corpus.path);
        get_if_present(s, "keywords", c.corpus.keywords);
        get_if_present(s, "max_per_user", c.corpus.max_per_user);
        get_if_present(s, "dedup", c.corpus.dedup);
    }
    if (j.contains("vectorizer")) {
        const auto& s = j.at("vectorizer");
        get_if_present(s, "min_df", c.vectorizer.min_df);
        std::int64_t rank = c.vectorizer.svd_rank;
        get_if_present(s, "svd_rank", rank);
        c.vectorizer.svd_rank = Eigen::Index(rank);
        get_if_present(s, "external_reduction", c.vectorizer.external_reduction);
    }
    if (j.contains("refine")) {
        const auto& s = j.at("refine");
        get_if_present(s, "tau", c.refine.tau);
        get_if_present(s, "grid", c.refine.grid);
        get_if_present(s, "label_tau", c.refine.label_tau);
        get_if_present(s, "k_representatives", c.refine.k_representatives);
    }
    if (j.contains("provider")) {
        const auto& s = j.at("provider");
        get_if_present(s, "kind", c.provider.kind);
        get_if_present(s, "model", c.provider.model);
        get_if_present(s, "temperature", c.provider.temperature);
        std::int64_t dim = c.provider.embed_dim;
        get_if_present(s, "embed_dim", dim);
        c.provider.embed_dim = Eigen::Index(dim);
        get_if_present(s, "base_url", c.provider.base_url);
        get_if_present(s, "api_key_env", c.provider.api_key_env);
        get_if_present(s, "embed_model", c.provider.embed_model);
        get_if_present(s, "price_per_1k_prompt", c.provider.price_per_1k_prompt);
        get_if_present(s, "price_per_1k_completion", c.provider.price_per_1k_completion);
        get_if_present(s, "max_cost", c.provider.max_cost);
        get_if_present(s, "script", c.provider.script);
        get_if_present(s, "cache_dir", c.provider.cache_dir);
    }
    if (j.contains("temporal")) {
        get_if_present(j.at("temporal"), "window_days", c.temporal.window_days);
    }
    get_if_present(j, "seed", c.seed);
    return c;
}

nlohmann::json config_to_json(const PipelineConfig& c) {
    return nlohmann::json{
        {"corpus",
         {{"path", c.corpus.path},
          {"keywords", c.corpus.keywords},
          {"max_per_user", c.corpus.max_per_user},
          {"dedup", c.corpus.dedup}}},
        {"vectorizer",
         {{"min_df", c.vectorizer.min_df},
          {"svd_rank", std::int64_t(c.vectorizer.svd_rank)},
          {"external_reduction", c.vectorizer.external_reduction}}},
        {"refine",
         {{"tau", c.refine.tau},
          {"grid", c.refine.grid},
          {"label_tau", c.refine.label_tau},
          {"k_representatives", c.refine.k_representatives}}},
        {"provider",
         {{"kind", c.provider.kind},
          {"model", c.provider.model},
          {"temperature", c.provider.temperature},
          {"embed_dim", std::int64_t(c.provider.embed_dim)},
          {"base_url", c.provider.base_url},
          {"api_key_env", c.provider.api_key_env},
          {"embed_model", c.provider.embed_model},
          {"price_per_1k_prompt", c.provider.price_per_1k_prompt},
          {"price_per_1k_completion", c.provider.price_per_1k_completion},
          {"max_cost", c.provider.max_cost},
          {"script", c.provider.script},
          {"cache_dir", c.provider.cache_dir}}},
        {"temporal", {{"window_days", c.temporal.window_days}}},
        {"seed", c.seed}};
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

std::string config_digest(const PipelineConfig& config) {
    return sha256_hex(config_to_json(config).dump());
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ParseError("matrix payload is not an array");
    const Eigen::Index rows = Eigen::Index(j.size());
    if (rows == 0) return Eigen::MatrixXd(0, 0);
    const Eigen::Index cols = Eigen::Index(j.at(0).size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j.at(std::size_t(r));
        if (Eigen::Index(row.size()) != cols) throw ParseError("matrix payload is ragged");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(std::size_t(c)).get<double>();
    }
    return m;
}

std::size_t stage_index(const std::string& stage) {
    for (std::size_t i = 0; i < kStageNames.size(); ++i) {
        if (stage == kStageNames[i]) return i;
    }
    throw ArgumentError("unknown stage \"" + stage + "\"");
}

Pipeline::Pipeline(PipelineConfig config, const std::filesystem::path& run_dir)
    : config_(std::move(config)) {
    if (config_.provider.kind != "mock" && config_.provider.kind != "remote") {
        throw ConfigError("provider kind must be \"mock\" or \"remote\", got \"" +
                          config_.provider.kind + "\"");
    }

    std::string api_key;
    if (config_.provider.kind == "remote") {
        if (config_.provider.base_url.empty()) {
            throw ConfigError("remote provider requires provider.base_url");
        }
        const char* key = std::getenv(config_.provider.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw ConfigError("remote provider requires credentials in $" +
                              config_.provider.api_key_env);
        }
        api_key = key;
    }

    const std::string digest = config_digest(config_);
    if (std::filesystem::exists(run_dir / "manifest.json")) {
        store_ = std::make_unique<RunStore>(RunStore::open(run_dir));
        if (store_->manifest().config_digest != digest) {
            throw StoreError("run directory " + run_dir.string() +
                             " was created with a different configuration; "
                             "use a fresh directory");
        }
    } else {
        store_ = std::make_unique<RunStore>(
            RunStore::create(run_dir, run_dir.filename().string(), digest));
    }

    const std::filesystem::path cache_dir = config_.provider.cache_dir.empty()
                                                ? run_dir / "cache"
                                                : std::filesystem::path(config_.provider.cache_dir);

    if (config_.provider.kind == "mock") {
        auto mock = std::make_shared<MockChatBackend>();
        if (!config_.provider.script.empty()) mock->load_script(config_.provider.script);
        chat_backend_ = mock;
        embed_backend_ = std::make_shared<HashEmbedBackend>(config_.seed, config_.provider.embed_dim);
    } else {
        RemoteOptions remote;
        remote.base_url = config_.provider.base_url;
        remote.api_key = api_key;
        remote.embed_model = config_.provider.embed_model;
        chat_backend_ = std::make_shared<RemoteChatBackend>(remote);
        embed_backend_ = std::make_shared<RemoteEmbedBackend>(remote);
    }

    ClientOptions client;
    client.model = config_.provider.model;
    client.temperature = config_.provider.temperature;
    client.k_max = std::max<std::size_t>(7, config_.refine.k_representatives);
    client.price_per_1k_prompt = config_.provider.price_per_1k_prompt;
    client.price_per_1k_completion = config_.provider.price_per_1k_completion;
    if (config_.provider.max_cost > 0) client.max_cost = config_.provider.max_cost;
    client.cache_dir = cache_dir;
    judge_ = std::make_unique<JudgeClient>(chat_backend_, client);
    embedder_ = std::make_unique<EmbedClient>(embed_backend_, client);
}

void Pipeline::flush_usage() {
    const auto judge_records = judge_->ledger();
    const auto embed_records = embedder_->ledger();
    if (judge_records.size() == flushed_judge_ && embed_records.size() == flushed_embed_) return;

    std::ofstream out(store_->dir() / kUsageFile, std::ios::app);
    for (std::size_t i = flushed_judge_; i < judge_records.size(); ++i) {
        out << nlohmann::json(judge_records[i]).dump() << '\n';
    }
    for (std::size_t i = flushed_embed_; i < embed_records.size(); ++i) {
        out << nlohmann::json(embed_records[i]).dump() << '\n';
    }
    flushed_judge_ = judge_records.size();
    flushed_embed_ = embed_records.size();
}

double Pipeline::recorded_cost() {
    flush_usage();
    std::ifstream in(store_->dir() / kUsageFile);
    double total = 0.0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        total += nlohmann::json::parse(line).value("estimated_cost", 0.0);
    }
    return total;
}

void Pipeline::execute(std::size_t first, std::size_t last) {
    if (first > last || last >= kStageNames.size()) {
        throw ArgumentError("execute: stage range out of bounds");
    }
    const std::string next = store_->resume();
    if (next.empty()) return;  // everything is done
    const std::size_t pending = stage_index(next);
    if (pending < first) {
        throw StoreError("stage " + next + " has not run yet; this verb starts at " +
                         kStageNames[first]);
    }
    for (std::size_t idx = pending; idx <= last; ++idx) {
        if (store_->manifest().stages.at(kStageNames[idx]).status == StageStatus::done) continue;
        try {
            run_stage(idx);
        } catch (...) {
            failed_stage_ = kStageNames[idx];
            store_->mark_failed(kStageNames[idx]);
            flush_usage();
            throw;
        }
        flush_usage();
    }
}

void Pipeline::run_stage(std::size_t idx) {
    switch (idx) {
        case 0: stage_corpus(); return;
        case 1: stage_vectors(); return;
        case 2: stage_clusters(); return;
        case 3: stage_summaries(); return;
        case 4: stage_refined(); return;
        case 5: stage_labels(); return;
        case 6: stage_assignments(); return;
        case 7: stage_report(); return;
    }
    throw ArgumentError("run_stage: bad index");
}

Corpus Pipeline::load_corpus_stage() const {
    const nlohmann::json j = store_->load_stage("01_corpus");
    Corpus corpus;
    corpus.provenance = j.value("provenance", "");
    corpus.warnings = j.value("warnings", std::vector<std::string>{});
    for (const auto& d : j.at("documents")) corpus.documents.push_back(d.get<Document>());
    return corpus;
}

void Pipeline::stage_corpus() {
    if (config_.corpus.path.empty()) throw ConfigError("corpus.path is not set");
    Corpus corpus = load_corpus(config_.corpus.path);
    if (!config_.corpus.keywords.empty()) {
        corpus = filter_keywords(corpus, config_.corpus.keywords);
    }
    if (config_.corpus.dedup) {
        auto [deduped, removed] = dedup_corpus(corpus);
        if (removed > 0) {
            deduped.warnings.push_back(std::to_string(removed) + " duplicate document(s) removed");
        }
        corpus = std::move(deduped);
    }
    if (config_.corpus.max_per_user > 0) {
        corpus = cap_per_user(corpus, config_.corpus.max_per_user, config_.seed);
    }
    if (corpus.empty()) throw ValidationError("corpus is empty after ingest filters");

    nlohmann::json payload{{"documents", corpus.documents},
                           {"provenance", corpus.provenance},
                           {"warnings", corpus.warnings}};
    store_->save_stage("01_corpus", payload);
}

void Pipeline::stage_vectors() {
    const Corpus corpus = load_corpus_stage();
    std::vector<std::string> notes;

    ReducedEmbedding reduced;
    std::size_t vocabulary_terms = 0;
    if (!config_.vectorizer.external_reduction.empty()) {
        reduced = load_external_reduction(config_.vectorizer.external_reduction, corpus);
    } else {
        TfidfOptions opts;
        opts.min_df = config_.vectorizer.min_df;
        const auto model = fit_tfidf<double>(corpus, opts);
        vocabulary_terms = model.vocabulary.terms.size();
        const auto scaled = maxabs_scale(model.matrix);

        const Eigen::Index cap = std::min(scaled.rows(), scaled.cols()) - 1;
        Eigen::Index rank = std::min(config_.vectorizer.svd_rank, cap);
        rank = std::max<Eigen::Index>(rank, 2);
        if (rank != config_.vectorizer.svd_rank) {
            notes.push_back("svd_rank " + std::to_string(config_.vectorizer.svd_rank) +
                            " clamped to " + std::to_string(rank) + " for this matrix");
        }
        reduced = truncated_svd(scaled, rank, config_.seed);
    }

    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const auto& d : corpus.documents) texts.push_back(d.text);
    const Eigen::MatrixXd doc_embeddings = embedder_->embed(texts);

    nlohmann::json payload{{"reduced", matrix_to_json(reduced.matrix)},
                           {"reducer_tag", reduced.reducer_tag},
                           {"doc_embeddings", matrix_to_json(doc_embeddings)},
                           {"vocabulary_terms", vocabulary_terms},
                           {"notes", notes}};
    store_->save_stage("02_vectors", payload);
}

void Pipeline::stage_clusters() {
    const Eigen::MatrixXd reduced = matrix_from_json(store_->load_stage("02_vectors").at("reduced"));
    const GridSearchResult result = grid_search_clustering(reduced);

    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : result.trials) {
        trials.push_back({{"min_cluster_size", t.config.min_cluster_size},
                          {"min_samples", t.config.min_samples},
                          {"dbcv", t.dbcv},
                          {"failed", t.failed}});
    }
    const auto& best = result.best_proposal;
    nlohmann::json payload{{"labels", best.labels},
                           {"cluster_count", best.cluster_count},
                           {"dbcv", best.dbcv},
                           {"min_cluster_size", best.config.min_cluster_size},
                           {"min_samples", best.config.min_samples},
                           {"trials", trials}};
    store_->save_stage("03_clusters", payload);
}

void Pipeline::stage_summaries() {
    const Corpus corpus = load_corpus_stage();
    const Eigen::MatrixXd doc_embeddings =
        matrix_from_json(store_->load_stage("02_vectors").at("doc_embeddings"));
    const nlohmann::json j3 = store_->load_stage("03_clusters");

    ClusterProposal proposal;
    proposal.labels = j3.at("labels").get<std::vector<int>>();
    proposal.cluster_count = j3.at("cluster_count").get<std::size_t>();

    const CoherenceSplit split = coherence_filter(proposal, *judge_, corpus.documents,
                                                  doc_embeddings, config_.refine.k_representatives);
    nlohmann::json payload{{"kept", split.kept}, {"discarded", split.discarded}};
    store_->save_stage("04_summaries", payload);
}

void Pipeline::stage_refined() {
    const Corpus corpus = load_corpus_stage();
    const Eigen::MatrixXd doc_embeddings =
        matrix_from_json(store_->load_stage("02_vectors").at("doc_embeddings"));
    const auto labels = store_->load_stage("03_clusters").at("labels").get<std::vector<int>>();
    const auto kept = store_->load_stage("04_summaries").at("kept").get<std::vector<ClusterSummary>>();
    if (kept.empty()) {
        throw ValidationError("every cluster was judged incoherent; nothing to merge");
    }

    const auto members = cluster_members(labels);
    std::vector<std::string> summary_texts;
    summary_texts.reserve(kept.size());
    for (const auto& s : kept) summary_texts.push_back(s.summary);
    const Eigen::MatrixXd summary_embeddings = embedder_->embed(summary_texts);

    nlohmann::json payload;
    double tau = config_.refine.tau;
    if (tau > 0.0) {
        payload["tau_source"] = "explicit";
        try {
            payload["table"] =
                grid_search_threshold(kept, summary_embeddings, doc_embeddings, members,
                                      config_.refine.grid);
        } catch (const UndefinedMetricError& e) {
            payload["table_note"] = e.what();
        }
    } else {
        const ThresholdTable table = grid_search_threshold(kept, summary_embeddings,
                                                           doc_embeddings, members,
                                                           config_.refine.grid);
        tau = table.selected_tau;
        payload["tau_source"] = "grid";
        payload["table"] = table;
    }

    payload["refined"] =
        merge_redundant(kept, summary_embeddings, tau, *judge_, members, corpus.documents);
    store_->save_stage("05_refined", payload);
}

void Pipeline::stage_labels() {
    RefinedStructure refined =
        store_->load_stage("05_refined").at("refined").get<RefinedStructure>();
    refined = ground_labels(std::move(refined), *judge_, *embedder_, config_.refine.label_tau);
    store_->save_stage("06_labels", nlohmann::json{{"refined", refined}});
}

void Pipeline::stage_assignments() {
    const Corpus corpus = load_corpus_stage();
    const RefinedStructure refined =
        store_->load_stage("06_labels").at("refined").get<RefinedStructure>();
    const AssignmentResult result = assign_corpus(corpus.documents, refined.labels, *judge_);
    nlohmann::json payload{{"assignments", result.by_document}, {"notes", result.notes}};
    store_->save_stage("07_assignments", payload);
}

void Pipeline::stage_report() {
    const Corpus corpus = load_corpus_stage();
    const nlohmann::json j2 = store_->load_stage("02_vectors");
    const Eigen::MatrixXd reduced = matrix_from_json(j2.at("reduced"));
    const Eigen::MatrixXd doc_embeddings = matrix_from_json(j2.at("doc_embeddings"));
    const nlohmann::json j3 = store_->load_stage("03_clusters");
    const auto original_labels = j3.at("labels").get<std::vector<int>>();
    const nlohmann::json j4 = store_->load_stage("04_summaries");
    const nlohmann::json j5 = store_->load_stage("05_refined");
    const RefinedStructure refined =
        store_->load_stage("06_labels").at("refined").get<RefinedStructure>();
    const nlohmann::json j7 = store_->load_stage("07_assignments");
    const auto assignments = j7.at("assignments").get<std::map<std::string, std::string>>();

    std::map<std::string, Eigen::Index> row_of;
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
        row_of[corpus.documents[i].id] = Eigen::Index(i);
    }

    std::vector<int> merged_labels(corpus.size(), -1);
    for (std::size_t c = 0; c < refined.clusters.size(); ++c) {
        for (const auto& id : refined.clusters[c].document_ids) {
            auto it = row_of.find(id);
            if (it == row_of.end()) {
                throw ValidationError("refined cluster references unknown document " + id);
            }
            merged_labels[std::size_t(it->second)] = int(c);
        }
    }

    std::vector<Eigen::Index> member_rows;
    std::vector<int> member_labels;
    for (std::size_t i = 0; i < merged_labels.size(); ++i) {
        if (merged_labels[i] >= 0) {
            member_rows.push_back(Eigen::Index(i));
            member_labels.push_back(merged_labels[i]);
        }
    }

    std::vector<std::string> warnings = corpus.warnings;
    auto space_metrics = [&](const Eigen::MatrixXd& space, const char* name) {
        nlohmann::json out;
        Eigen::MatrixXd points(Eigen::Index(member_rows.size()), space.cols());
        for (std::size_t i = 0; i < member_rows.size(); ++i) {
            points.row(Eigen::Index(i)) = space.row(member_rows[i]);
        }
        try {
            out["silhouette"] = silhouette(points, member_labels);
            out["davies_bouldin"] = davies_bouldin(points, member_labels);
        } catch (const UndefinedMetricError& e) {
            out = nlohmann::json::object();
            warnings.push_back(std::string(name) + " metrics undefined: " + e.what());
        }
        return out;
    };

    const auto original_coherence = intra_cluster_coherence(doc_embeddings, original_labels);
    const auto refined_coherence = intra_cluster_coherence(doc_embeddings, merged_labels);
    auto values_of = [](const CoherenceTable<double>& t) {
        std::vector<double> v;
        for (const auto& [id, c] : t.by_cluster) v.push_back(c);
        return v;
    };
    const std::vector<double> original_values = values_of(original_coherence);
    const std::vector<double> refined_values = values_of(refined_coherence);
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / double(v.size());
    };

    nlohmann::json coherence{{"original_mean", mean(original_values)},
                             {"refined_mean", mean(refined_values)}};
    if (!original_values.empty() && !refined_values.empty()) {
        try {
            const StatResult cmp = mann_whitney_u(original_values, refined_values);
            coherence["comparison"] = {{"statistic", cmp.statistic},
                                       {"method", cmp.method}};
            if (cmp.p_value) coherence["comparison"]["p_value"] = *cmp.p_value;
        } catch (const Error& e) {
            warnings.push_back(std::string("coherence comparison unavailable: ") + e.what());
        }
    }

    std::map<std::string, std::size_t> assignment_counts;
    for (const auto& [id, label] : assignments) ++assignment_counts[label];

    for (const auto& note : j7.value("notes", std::vector<std::string>{})) warnings.push_back(note);
    for (const auto& w : judge_->warnings()) warnings.push_back(w);

    std::size_t noise = 0;
    for (int l : original_labels) noise += l < 0 ? 1 : 0;

    nlohmann::json payload{
        {"cluster_count", refined.clusters.size()},
        {"selected_tau", refined.tau},
        {"tau_source", j5.value("tau_source", "grid")},
        {"label_count", refined.labels.size()},
        {"labels", refined.labels},
        {"hdbscan",
         {{"cluster_count", j3.at("cluster_count").get<std::size_t>()},
          {"dbcv", j3.at("dbcv").get<double>()},
          {"min_cluster_size", j3.at("min_cluster_size").get<std::size_t>()},
          {"min_samples", j3.at("min_samples").get<std::size_t>()}}},
        {"metrics",
         {{"provider_space", space_metrics(doc_embeddings, "provider-space")},
          {"reduced_space", space_metrics(reduced, "reduced-space")}}},
        {"coherence", coherence},
        {"assignment_counts", assignment_counts},
        {"noise_documents", noise},
        {"discarded_clusters", j4.at("discarded").size()},
        {"provider_cost", recorded_cost()},
        {"warnings", warnings}};
    store_->save_stage("08_report", payload);
}

} // namespace refinery
