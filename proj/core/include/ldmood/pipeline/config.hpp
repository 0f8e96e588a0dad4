#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldmood/corruptions.hpp"
#include "ldmood/diffusion/schedule.hpp"
#include "ldmood/diffusion/trainer.hpp"
#include "ldmood/diffusion/unet.hpp"
#include "ldmood/scoring/scorer.hpp"
#include "ldmood/synthetic.hpp"
#include "ldmood/vqvae/config.hpp"
#include "ldmood/vqvae/trainer.hpp"

namespace ldmood::pipeline {

struct DataConfig {
    Dims dims{32, 32, 32};
    std::size_t train = 200, val = 20, test = 20;
    std::vector<FamilyId> far_families{FamilyId::CuboidField, FamilyId::SphereGrid, FamilyId::StripeTexture};
    std::size_t far_count = 20;
};

struct CorruptionConfig {
    /// Empty means the standard 14-spec suite.
    std::vector<CorruptionSpec> specs;
    /// Class names ("kind:param") to leave out.
    std::vector<std::string> skip;
};

struct RunConfig {
    std::string preset = "desk";
    std::uint64_t seed = 20240601;
    bool deterministic = true;
    std::size_t workers = 1;
    DataConfig data;
    CorruptionConfig corruption;
    vq::VQConfig vq;
    vq::VQTrainConfig vq_train;
    diffusion::UNetConfig unet;
    diffusion::NoiseSchedule schedule = diffusion::make_scaled_linear_schedule();
    diffusion::DDPMTrainConfig ddpm_train;
    scoring::ScoringConfig scoring = scoring::ScoringConfig::desk();
    bool write_maps = true;

    /// Specs after applying `skip`, seeded from the run seed.
    std::vector<CorruptionSpec> corruption_specs() const;
    /// Component seeds are derived from `seed`, so one number pins the whole run.
    void derive_seeds();
    void validate() const;
};

/// Named starting points: "desk" (trainable on one CPU core) and
/// "paper-shape" (full-size architecture, documentation only).
RunConfig preset(const std::string& name);

nlohmann::json to_json(const RunConfig& c);
/// Starts from the named preset (default "desk") and applies the fields present in `j`.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// SHA-256 of the canonical serialized config.
std::string config_hash(const RunConfig& c);

}  // namespace ldmood::pipeline
