#include "refinery/store.hpp"

#include "refinery/sha256.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

namespace refinery {

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kLockName = "run.lock";

std::string status_tag(StageStatus s) {
    switch (s) {
        case StageStatus::pending: return "pending";
        case StageStatus::done: return "done";
        case StageStatus::failed: return "failed";
    }
    return "pending";
}

StageStatus parse_status(const std::string& tag) {
    if (tag == "done") return StageStatus::done;
    if (tag == "failed") return StageStatus::failed;
    if (tag == "pending") return StageStatus::pending;
    throw StoreError("manifest: unknown stage status \"" + tag + "\"");
}

bool known_stage(const std::string& stage) {
    return std::find(kStageNames.begin(), kStageNames.end(), stage) != kStageNames.end();
}

std::string now_utc() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace

RunStore::RunStore(RunStore&& other) noexcept
    : dir_(std::move(other.dir_)),
      manifest_(std::move(other.manifest_)),
      warnings_(std::move(other.warnings_)),
      holds_lock_(other.holds_lock_) {
    other.holds_lock_ = false;
}

RunStore::~RunStore() { release_lock(); }

void RunStore::acquire_lock() {
    const std::filesystem::path lock = dir_ / kLockName;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const int fd = ::open(lock.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd >= 0) {
            const std::string pid = std::to_string(::getpid()) + "\n";
            [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
            ::close(fd);
            holds_lock_ = true;
            return;
        }
        if (errno != EEXIST) throw IoError("cannot create lock file " + lock.string());

        // A leftover lock from a dead process is stale and may be stolen.
        long other_pid = 0;
        try {
            other_pid = std::strtol(read_file(lock).c_str(), nullptr, 10);
        } catch (const IoError&) {
        }
        if (other_pid > 0 && ::kill(pid_t(other_pid), 0) == 0) {
            throw StoreError("run directory " + dir_.string() + " is locked by process " +
                             std::to_string(other_pid));
        }
        warnings_.push_back("removed stale lock left by process " + std::to_string(other_pid));
        std::filesystem::remove(lock);
    }
    throw StoreError("could not acquire lock in " + dir_.string());
}

void RunStore::release_lock() {
    if (!holds_lock_) return;
    std::error_code ec;
    std::filesystem::remove(dir_ / kLockName, ec);
    holds_lock_ = false;
}

RunStore RunStore::create(const std::filesystem::path& dir, const std::string& run_id,
                          const std::string& config_digest) {
    std::filesystem::create_directories(dir);
    if (std::filesystem::exists(dir / kManifestName)) {
        throw StoreError("run directory " + dir.string() + " is already initialized; open it instead");
    }
    RunStore store;
    store.dir_ = dir;
    store.acquire_lock();
    store.manifest_.run_id = run_id;
    store.manifest_.config_digest = config_digest;
    store.manifest_.created = now_utc();
    for (const char* stage : kStageNames) store.manifest_.stages[stage] = StageState{};
    store.write_manifest();
    return store;
}

RunStore RunStore::open(const std::filesystem::path& dir, bool read_only) {
    const std::filesystem::path path = dir / kManifestName;
    if (!std::filesystem::exists(path)) {
        throw StoreError(dir.string() + " is not a run directory (no manifest)");
    }
    RunStore store;
    store.dir_ = dir;
    if (!read_only) store.acquire_lock();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw StoreError("unreadable manifest in " + dir.string() + ": " + e.what());
    }
    store.manifest_ = parse_manifest(j);
    return store;
}

RunManifest RunStore::parse_manifest(const nlohmann::json& j) {
    RunManifest m;
    try {
        m.run_id = j.at("run_id").get<std::string>();
        m.config_digest = j.at("config_digest").get<std::string>();
        m.created = j.at("created").get<std::string>();
        for (const char* stage : kStageNames) m.stages[stage] = StageState{};
        for (const auto& [name, state] : j.at("stages").items()) {
            if (!known_stage(name)) throw StoreError("manifest: unknown stage \"" + name + "\"");
            m.stages[name].status = parse_status(state.at("status").get<std::string>());
            m.stages[name].output_digest = state.value("output_digest", "");
        }
    } catch (const nlohmann::json::exception& e) {
        throw StoreError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

void RunStore::write_manifest() const {
    nlohmann::json stages;
    for (const auto& [name, state] : manifest_.stages) {
        stages[name] = {{"status", status_tag(state.status)},
                        {"output_digest", state.output_digest}};
    }
    nlohmann::json j{{"run_id", manifest_.run_id},
                     {"config_digest", manifest_.config_digest},
                     {"created", manifest_.created},
                     {"stages", stages}};
    write_atomic(dir_ / kManifestName, j.dump(2) + "\n");
}

std::filesystem::path RunStore::stage_path(const std::string& stage) const {
    if (!known_stage(stage)) throw ArgumentError("unknown stage \"" + stage + "\"");
    return dir_ / (stage + ".json");
}

nlohmann::json RunStore::round_floats(nlohmann::json j) {
    if (j.is_object() || j.is_array()) {
        for (auto& item : j) item = round_floats(item);
    } else if (j.is_number_float()) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.9g", j.get<double>());
        j = std::strtod(buf, nullptr);
    }
    return j;
}

std::string RunStore::payload_text(const nlohmann::json& payload) {
    return round_floats(payload).dump(2) + "\n";
}

std::string RunStore::save_stage(const std::string& stage, const nlohmann::json& payload,
                                 bool force) {
    if (!holds_lock_) throw StoreError("read-only store cannot save stages");
    const std::filesystem::path path = stage_path(stage);
    const std::string text = payload_text(payload);
    const std::string digest = sha256_hex(text);

    StageState& state = manifest_.stages.at(stage);
    if (state.status == StageStatus::done) {
        if (state.output_digest == digest) return digest;
        if (!force) {
            throw StoreError("stage " + stage + " is already done with different content; "
                             "pass force to overwrite");
        }
    }
    write_atomic(path, text);
    state.status = StageStatus::done;
    state.output_digest = digest;
    write_manifest();
    return digest;
}

nlohmann::json RunStore::load_stage(const std::string& stage) const {
    const std::filesystem::path path = stage_path(stage);
    if (!std::filesystem::exists(path)) {
        throw StoreError("stage " + stage + " has no output file");
    }
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw StoreError("stage " + stage + " is unreadable: " + e.what());
    }
}

void RunStore::mark_failed(const std::string& stage) {
    if (!holds_lock_) throw StoreError("read-only store cannot mark stages");
    if (!known_stage(stage)) throw ArgumentError("unknown stage \"" + stage + "\"");
    manifest_.stages.at(stage).status = StageStatus::failed;
    write_manifest();
}

std::string RunStore::resume() {
    bool changed = false;
    for (const char* stage : kStageNames) {
        StageState& state = manifest_.stages.at(stage);
        if (state.status != StageStatus::done) continue;
        const std::filesystem::path path = stage_path(stage);
        bool ok = std::filesystem::exists(path);
        if (ok) ok = sha256_hex(read_file(path)) == state.output_digest;
        if (!ok) {
            state.status = StageStatus::pending;
            state.output_digest.clear();
            warnings_.push_back("stage " + std::string(stage) +
                                " failed its digest check; demoted to pending");
            changed = true;
        }
    }
    if (changed && holds_lock_) write_manifest();

    for (const char* stage : kStageNames) {
        if (manifest_.stages.at(stage).status != StageStatus::done) return stage;
    }
    return "";
}

} // namespace refinery
