#include "refinery/pipeline.hpp"
#include "refinery/refine.hpp"
#include "refinery/stats.hpp"
#include "refinery/temporal.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace {

using namespace refinery;

struct VerbRange {
    std::size_t first;
    std::size_t last;
};

const std::map<std::string, VerbRange> kVerbs{
    {"ingest", {0, 0}}, {"cluster", {1, 2}},  {"refine", {3, 4}}, {"label", {5, 5}},
    {"assign", {6, 6}}, {"evaluate", {7, 7}}, {"run", {0, 7}},
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

void print_summary(const nlohmann::json& report) {
    const auto& provider = report.at("metrics").at("provider_space");
    const auto& reduced = report.at("metrics").at("reduced_space");
    auto metric = [](const nlohmann::json& space, const char* key) {
        return space.contains(key) ? fmt(space.at(key).get<double>()) : std::string("undefined");
    };
    std::cout << "clusters        " << report.at("cluster_count").get<std::size_t>() << "\n"
              << "selected tau    " << fmt(report.at("selected_tau").get<double>()) << " ("
              << report.at("tau_source").get<std::string>() << ")\n"
              << "labels          " << report.at("label_count").get<std::size_t>() << "\n"
              << "S provider      " << metric(provider, "silhouette") << "\n"
              << "DB provider     " << metric(provider, "davies_bouldin") << "\n"
              << "S reduced       " << metric(reduced, "silhouette") << "\n"
              << "DB reduced      " << metric(reduced, "davies_bouldin") << "\n"
              << "provider cost   " << fmt(report.at("provider_cost").get<double>()) << "\n";
}

Corpus corpus_from_stage(const nlohmann::json& j) {
    Corpus corpus;
    corpus.provenance = j.value("provenance", "");
    for (const auto& d : j.at("documents")) corpus.documents.push_back(d.get<Document>());
    return corpus;
}

std::string dominant_platform(const Corpus& corpus) {
    std::map<std::string, std::size_t> counts;
    for (const auto& d : corpus.documents) ++counts[d.platform];
    std::string best = "unknown";
    std::size_t best_count = 0;
    for (const auto& [platform, count] : counts) {
        if (count > best_count) {
            best = platform;
            best_count = count;
        }
    }
    return best;
}

int do_export(RunStore& store, const std::string& what) {
    if (what == "coords") {
        const Corpus corpus = corpus_from_stage(store.load_stage("01_corpus"));
        const Eigen::MatrixXd reduced =
            matrix_from_json(store.load_stage("02_vectors").at("reduced"));
        std::map<std::string, std::string> assignments;
        try {
            assignments = store.load_stage("07_assignments")
                              .at("assignments")
                              .get<std::map<std::string, std::string>>();
        } catch (const StoreError&) {
            // assignment stage not run yet; labels column falls back to ""
        }
        const std::filesystem::path path = store.dir() / "coords.tsv";
        std::ofstream out(path);
        out << "id\tx\ty\tlabel\n";
        for (Eigen::Index r = 0; r < reduced.rows(); ++r) {
            const auto& id = corpus.documents[std::size_t(r)].id;
            const auto it = assignments.find(id);
            out << id << '\t' << reduced(r, 0) << '\t' << reduced(r, 1) << '\t'
                << (it == assignments.end() ? "" : it->second) << '\n';
        }
        std::cout << "wrote " << path.string() << "\n";
        return 0;
    }
    if (what == "grid") {
        const nlohmann::json j5 = store.load_stage("05_refined");
        if (!j5.contains("table")) {
            std::cerr << "error: this run has no threshold table ("
                      << j5.value("table_note", "explicit tau, grid skipped") << ")\n";
            return 1;
        }
        const ThresholdTable table = j5.at("table").get<ThresholdTable>();
        const std::filesystem::path path = store.dir() / "grid.tsv";
        std::ofstream out(path);
        out << "tau\tC\tS\tDB\n";
        for (const auto& row : table.rows) {
            out << row.tau << '\t' << row.cluster_count << '\t';
            if (row.defined) {
                out << row.silhouette << '\t' << row.davies_bouldin << '\n';
            } else {
                out << "undefined\tundefined\n";
            }
        }
        std::cout << "wrote " << path.string() << " (selected tau " << table.selected_tau << ")\n";
        return 0;
    }
    if (what == "report") {
        const nlohmann::json report = store.load_stage("08_report");
        const std::filesystem::path path = store.dir() / "report.json";
        std::ofstream out(path);
        out << report.dump(2) << "\n";
        std::cout << "wrote " << path.string() << "\n";
        return 0;
    }
    std::cerr << "error: unknown export target \"" << what << "\"\n";
    return 1;
}

int do_temporal(const PipelineConfig& config, const std::filesystem::path& run_dir,
                const std::filesystem::path& other_dir) {
    RunStore own = RunStore::open(run_dir, true);
    RunStore other = RunStore::open(other_dir, true);

    const Corpus corpus_a = corpus_from_stage(own.load_stage("01_corpus"));
    const Corpus corpus_b = corpus_from_stage(other.load_stage("01_corpus"));
    const auto assign_a =
        own.load_stage("07_assignments").at("assignments").get<std::map<std::string, std::string>>();
    const auto assign_b = other.load_stage("07_assignments")
                              .at("assignments")
                              .get<std::map<std::string, std::string>>();
    const auto labels_a =
        own.load_stage("06_labels").at("refined").at("labels").get<std::vector<std::string>>();
    const auto labels_b =
        other.load_stage("06_labels").at("refined").at("labels").get<std::vector<std::string>>();

    nlohmann::json out;
    std::vector<std::string> notes;

    const WindowSelection window_a = densest_window(corpus_a, config.temporal.window_days);
    const WindowSelection window_b = densest_window(corpus_b, config.temporal.window_days);
    out["window"] = window_a;
    out["other_window"] = window_b;
    if (window_a.degenerate) notes.push_back("own corpus has no real timestamps");
    if (window_b.degenerate) notes.push_back("other corpus has no real timestamps");

    const Corpus in_window_a = filter_window(corpus_a, window_a);
    const Corpus in_window_b = filter_window(corpus_b, window_b);
    if (in_window_a.empty() || in_window_b.empty()) {
        std::cerr << "error: a densest window contains no documents\n";
        return 1;
    }
    const auto [matched_a, matched_b] = match_volume(in_window_a, in_window_b, config.seed);
    out["matched_size"] = matched_a.size();

    std::vector<std::string> universe = labels_a;
    for (const auto& l : labels_b) {
        if (std::find(universe.begin(), universe.end(), l) == universe.end()) universe.push_back(l);
    }
    universe.push_back("None of the above");

    auto pick = [](const Corpus& corpus, const std::map<std::string, std::string>& all) {
        std::map<std::string, std::string> out;
        for (const auto& d : corpus.documents) {
            auto it = all.find(d.id);
            out[d.id] = it == all.end() ? "unassigned" : it->second;
        }
        return out;
    };
    const ContingencyTable table =
        theme_platform_table(pick(matched_a, assign_a), pick(matched_b, assign_b), universe,
                             dominant_platform(corpus_a), dominant_platform(corpus_b));
    for (const auto& n : table.notes) notes.push_back(n);

    nlohmann::json counts = nlohmann::json::array();
    for (Eigen::Index r = 0; r < table.counts.rows(); ++r) {
        counts.push_back({table.counts(r, 0), table.counts(r, 1)});
    }
    out["table"] = {{"rows", table.row_labels}, {"columns", table.column_labels}, {"counts", counts}};

    try {
        const StatResult chi = chi_square_independence(table.counts);
        out["chi_square"] = {{"statistic", chi.statistic}, {"df", *chi.df}, {"p_value", *chi.p_value}};
        for (const auto& n : chi.notes) notes.push_back(n);
        std::cout << "chi-square " << fmt(chi.statistic) << " (df " << *chi.df << ", p "
                  << fmt(*chi.p_value) << ")\n";
    } catch (const Error& e) {
        out["chi_square"] = nullptr;
        notes.push_back(std::string("chi-square unavailable: ") + e.what());
        std::cout << "chi-square unavailable: " << e.what() << "\n";
    }
    out["notes"] = notes;

    {
        std::ofstream file(run_dir / "temporal.json");
        file << RunStore::round_floats(out).dump(2) << "\n";
    }
    {
        std::ofstream tsv(run_dir / "contingency.tsv");
        tsv << "theme\t" << table.column_labels[0] << '\t' << table.column_labels[1] << '\n';
        for (Eigen::Index r = 0; r < table.counts.rows(); ++r) {
            tsv << table.row_labels[std::size_t(r)] << '\t' << table.counts(r, 0) << '\t'
                << table.counts(r, 1) << '\n';
        }
    }
    std::cout << "densest window " << window_a.start << " .. " << window_a.end << " ("
              << window_a.post_count << " posts)\n"
              << "wrote " << (run_dir / "temporal.json").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM-judge refinement pipeline for clustered text corpora"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the verb

    std::string config_path;
    std::string run_dir;
    std::optional<std::uint64_t> seed;
    std::optional<double> tau;
    std::optional<double> label_tau;
    std::optional<std::size_t> k_representatives;
    std::optional<double> max_cost;
    std::optional<std::string> provider;
    std::string export_what = "report";
    std::string other_run;

    app.add_option("--config", config_path, "pipeline config JSON");
    app.add_option("--run-dir", run_dir, "run directory")->required();
    app.add_option("--seed", seed, "override seed");
    app.add_option("--tau", tau, "merge threshold (skips grid selection)");
    app.add_option("--label-tau", label_tau, "label consolidation threshold");
    app.add_option("--k-representatives", k_representatives, "representatives per cluster");
    app.add_option("--max-cost", max_cost, "abort once estimated spend reaches this");
    app.add_option("--provider", provider, "mock or remote")
        ->check(CLI::IsMember({"mock", "remote"}));

    for (const auto& [verb, range] : kVerbs) app.add_subcommand(verb);
    auto* export_cmd = app.add_subcommand("export");
    export_cmd->add_option("--export", export_what, "coords, grid, or report")
        ->check(CLI::IsMember({"coords", "grid", "report"}));
    auto* temporal_cmd = app.add_subcommand("temporal");
    temporal_cmd->add_option("--other-run", other_run, "run directory to contrast against")
        ->required();

    CLI11_PARSE(app, argc, argv);
    const std::string verb = app.get_subcommands().front()->get_name();

    try {
        PipelineConfig config = config_path.empty() ? PipelineConfig{} : load_config(config_path);
        if (seed) config.seed = *seed;
        if (tau) config.refine.tau = *tau;
        if (label_tau) config.refine.label_tau = *label_tau;
        if (k_representatives) config.refine.k_representatives = *k_representatives;
        if (max_cost) config.provider.max_cost = *max_cost;
        if (provider) config.provider.kind = *provider;

        if (verb == "export") {
            RunStore store = RunStore::open(run_dir, true);
            return do_export(store, export_what);
        }
        if (verb == "temporal") {
            return do_temporal(config, run_dir, other_run);
        }

        const VerbRange range = kVerbs.at(verb);
        Pipeline pipeline(std::move(config), run_dir);
        try {
            pipeline.execute(range.first, range.last);
        } catch (const Error& e) {
            if (!pipeline.failed_stage().empty()) {
                std::cerr << "error in stage " << pipeline.failed_stage() << ": " << e.what()
                          << "\n";
                return 1;
            }
            throw;
        }
        for (const auto& w : pipeline.store().warnings()) std::cerr << "warning: " << w << "\n";
        if (range.last == 7) {
            print_summary(pipeline.store().load_stage("08_report"));
            std::cout << "report: " << pipeline.store().stage_path("08_report").string() << "\n";
        } else {
            std::cout << verb << " complete (through " << kStageNames[range.last] << ")\n";
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
