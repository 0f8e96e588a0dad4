#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldmood/dataset.hpp"
#include "ldmood/pipeline/config.hpp"

namespace ldmood::pipeline {

/// Where every artifact of a run lives, relative to the output root.
struct Layout {
    std::filesystem::path root;

    std::filesystem::path data() const { return root / "data"; }
    std::filesystem::path manifest(const std::string& name) const { return data() / (name + ".json"); }
    std::filesystem::path vqvae() const { return root / "models" / "vqvae.nta"; }
    std::filesystem::path ddpm() const { return root / "models" / "ddpm.nta"; }
    std::filesystem::path stats() const { return root / "stats" / "validation_stats.nta"; }
    std::filesystem::path scores() const { return root / "scores"; }
    std::filesystem::path maps() const { return root / "maps"; }
    std::filesystem::path results() const { return root / "results"; }
    std::filesystem::path runs() const { return root / "runs"; }
};

inline constexpr const char* kIdTrain = "head_like_train";
inline constexpr const char* kIdVal = "head_like_val";
inline constexpr const char* kIdTest = "head_like_test";
inline constexpr const char* kNearOod = "near_ood";

struct Context {
    RunConfig config;
    Layout layout;
    /// Progress lines; null for silence.
    std::ostream* log = nullptr;
    /// Recompute even when the recorded inputs of a stage are unchanged.
    bool force = false;
};

/// Record of one command invocation, stored as runs/<command>.json.
struct RunManifest {
    std::string command;
    std::string tool_version;
    std::string config_hash;
    std::uint64_t seed = 0;
    /// Hash of the config sections this command reads.
    std::string stage_hash;
    std::vector<std::pair<std::string, std::string>> inputs;   // (artifact, sha256)
    std::vector<std::pair<std::string, std::string>> outputs;  // (path relative to the root, sha256)
    double wall_time_s = 0.0;
    bool skipped = false;  // inputs unchanged, previous outputs kept
};

nlohmann::json to_json(const RunManifest& m, bool include_wall_time);
std::string tool_version();

/// Names of the manifests `score` and `evaluate` work on: ID test, far families, near-OOD.
std::vector<std::string> test_manifests(const RunConfig& config);

RunManifest cmd_synth_data(const Context& ctx);
RunManifest cmd_corrupt(const Context& ctx);
RunManifest cmd_train_vqvae(const Context& ctx);
RunManifest cmd_train_ddpm(const Context& ctx);
RunManifest cmd_fit_stats(const Context& ctx);
/// Scores the named manifests (all test manifests when empty).
RunManifest cmd_score(const Context& ctx, const std::vector<std::string>& manifests = {});
/// Anomaly maps for standalone volume files, written to `out_dir/<stem>.map.vol`.
RunManifest cmd_anomaly_map(const Context& ctx, const std::vector<std::filesystem::path>& inputs,
                            const std::filesystem::path& out_dir);
/// Builds the results table from this run's scores plus any (model name, scores dir) comparisons.
RunManifest cmd_evaluate(const Context& ctx,
                         const std::vector<std::pair<std::string, std::filesystem::path>>& compare = {});
std::vector<RunManifest> cmd_pipeline(const Context& ctx);

}  // namespace ldmood::pipeline
