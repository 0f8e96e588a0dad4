#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ldmood/diffusion/sampler.hpp"
#include "ldmood/diffusion/schedule.hpp"
#include "ldmood/diffusion/unet.hpp"
#include "ldmood/nn/adam.hpp"
#include "ldmood/nn/archive.hpp"

namespace ldmood::diffusion {

/// Per-channel affine map taking training latents to zero mean, unit variance.
struct LatentStats {
    std::vector<double> mean, std;

    static LatentStats fit(const std::vector<nn::Tensor<float>>& latents);
    nn::Tensor<float> standardize(const nn::Tensor<float>& z) const;
    nn::Tensor<float> unstandardize(const nn::Tensor<float>& z) const;
};

void to_json(nlohmann::json& j, const LatentStats& s);
void from_json(const nlohmann::json& j, LatentStats& s);

/// UNet + schedule + latent scaling: everything a reconstruction needs.
struct DiffusionModel {
    UNet<float> unet;
    NoiseSchedule schedule;
    LatentStats latent_stats;

    /// Adapter for the samplers. The UNet caches activations, so one model per thread.
    EpsModel eps_model();
};

struct DDPMTrainConfig {
    std::size_t max_epochs = 150;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    std::size_t patience = 15;
    /// Fixed (t, eps) draws per validation latent.
    std::size_t val_draws = 4;
    std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const DDPMTrainConfig& c);
void from_json(const nlohmann::json& j, DDPMTrainConfig& c);

struct DDPMEpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

void to_json(nlohmann::json& j, const DDPMEpochLog& e);
void from_json(const nlohmann::json& j, DDPMEpochLog& e);

struct DDPMTrainState {
    DiffusionModel current;
    DiffusionModel best;
    nn::AdamState<float> adam;
    std::vector<DDPMEpochLog> log;
    std::size_t epoch = 0;
    std::size_t best_epoch = 0;
    double best_val = 0.0;
    double initial_val = 0.0;  // validation loss before the first update
    std::size_t stale_epochs = 0;
    bool finished = false;
    std::string fingerprint;
};

void save_checkpoint(const DDPMTrainState& state, const DDPMTrainConfig& train, const std::filesystem::path& path);
DDPMTrainState load_train_state(const std::filesystem::path& path, DDPMTrainConfig* train = nullptr);
/// Best weights plus schedule and latent scaling.
DiffusionModel load_model(const std::filesystem::path& path);

/// Mean L_simple over fixed seeded (t, eps) draws; latents already standardized.
double validation_loss(DiffusionModel& model, const std::vector<nn::Tensor<float>>& latents, std::size_t draws,
                       std::uint64_t seed);

using DDPMProgress = std::function<void(const DDPMEpochLog&)>;

class DDPMTrainer {
public:
    DDPMTrainer(UNetConfig unet, NoiseSchedule schedule, DDPMTrainConfig train);

    /// `train_latents` are raw de-quantized latents; scaling is fitted here.
    DDPMTrainState start(const std::vector<nn::Tensor<float>>& train_latents,
                         const std::vector<nn::Tensor<float>>& val_latents, const std::filesystem::path& checkpoint,
                         bool resume);
    bool run_epoch(DDPMTrainState& state, const std::vector<nn::Tensor<float>>& train_latents,
                   const std::vector<nn::Tensor<float>>& val_latents);
    DDPMTrainState train(const std::vector<nn::Tensor<float>>& train_latents,
                         const std::vector<nn::Tensor<float>>& val_latents, const std::filesystem::path& checkpoint,
                         bool resume = true, const DDPMProgress& progress = {});

    const DDPMTrainConfig& config() const noexcept { return train_; }
    void set_fingerprint(std::string f) { fingerprint_ = std::move(f); }

private:
    UNetConfig unet_;
    NoiseSchedule schedule_;
    DDPMTrainConfig train_;
    std::string fingerprint_;
};

}  // namespace ldmood::diffusion
