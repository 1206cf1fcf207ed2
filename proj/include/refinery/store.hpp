#pragma once

#include "refinery/errors.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace refinery {

inline constexpr std::array<const char*, 8> kStageNames = {
    "01_corpus",  "02_vectors", "03_clusters",    "04_summaries",
    "05_refined", "06_labels",  "07_assignments", "08_report"};

enum class StageStatus { pending, done, failed };

struct StageState {
    StageStatus status = StageStatus::pending;
    std::string output_digest;
};

struct RunManifest {
    std::string run_id;
    std::string config_digest;
    std::string created;
    std::map<std::string, StageState> stages;  // keyed by stage name
};

// One run directory: a manifest plus one JSON file per stage. A writer holds
// the directory's lock file for its lifetime; read-only opens skip the lock.
// Stage writes are temp-file-plus-rename, and all floats are rounded to nine
// significant digits before serialization so identical runs produce
// byte-identical stage files.
class RunStore {
public:
    RunStore(const RunStore&) = delete;
    RunStore& operator=(const RunStore&) = delete;
    RunStore(RunStore&& other) noexcept;
    RunStore& operator=(RunStore&&) = delete;
    ~RunStore();

    // Initializes a fresh run directory. An existing manifest is an error;
    // opening it instead is the resume path.
    static RunStore create(const std::filesystem::path& dir, const std::string& run_id,
                           const std::string& config_digest);

    // Opens an existing run directory. Missing manifest -> StoreError.
    static RunStore open(const std::filesystem::path& dir, bool read_only = false);

    const RunManifest& manifest() const { return manifest_; }
    const std::filesystem::path& dir() const { return dir_; }

    std::filesystem::path stage_path(const std::string& stage) const;

    // Writes the stage payload and records its digest. Re-saving a done
    // stage with a different payload is a conflict unless forced; an
    // identical payload is a no-op.
    std::string save_stage(const std::string& stage, const nlohmann::json& payload,
                           bool force = false);

    nlohmann::json load_stage(const std::string& stage) const;

    void mark_failed(const std::string& stage);

    // Verifies every done stage's digest, demoting corrupted stages to
    // pending with a warning, and returns the first stage that still needs
    // to run (empty string when the run is complete).
    std::string resume();

    const std::vector<std::string>& warnings() const { return warnings_; }

    // Rounds every float in the document to 9 significant digits.
    static nlohmann::json round_floats(nlohmann::json j);

    static std::string payload_text(const nlohmann::json& payload);

private:
    RunStore() = default;

    void acquire_lock();
    void release_lock();
    void write_manifest() const;
    static RunManifest parse_manifest(const nlohmann::json& j);

    std::filesystem::path dir_;
    RunManifest manifest_;
    std::vector<std::string> warnings_;
    bool holds_lock_ = false;
};

} // namespace refinery
