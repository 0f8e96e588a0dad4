#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ldmood/diffusion/schedule.hpp"

namespace ldmood::diffusion {

enum class SamplerKind { Ancestral, Plms };

struct SamplerConfig {
    SamplerKind kind = SamplerKind::Plms;
    std::size_t inference_steps = 100;
    /// Multistep order cap, 1..4. Order 1 is the plain deterministic chain.
    std::size_t max_order = 4;

    void validate(std::size_t T) const;
};

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);

/// Evenly spaced integers k * T / steps, k = 0..steps-1, ascending; always starts at 0.
std::vector<std::size_t> inference_grid(std::size_t T, std::size_t steps);

/// Noise predictor eps(z_t, t).
using EpsModel = std::function<nn::Tensor<float>(const nn::Tensor<float>&, std::size_t)>;

struct SamplerResult {
    nn::Tensor<float> z0;
    std::size_t evaluations = 0;
    bool below_grid = false;  // t_start had no grid point beneath it; z0 is the input
};

/// Pseudo linear multistep integration from t_start down to 0, visiting the
/// grid points below t_start.
SamplerResult plms_reconstruct(const NoiseSchedule& s, const EpsModel& eps, const nn::Tensor<float>& z_start,
                               std::size_t t_start, const SamplerConfig& config);

/// Ancestral chain t_start -> 0 through every timestep, noise drawn from `seed`.
SamplerResult ancestral_reconstruct(const NoiseSchedule& s, const EpsModel& eps, const nn::Tensor<float>& z_start,
                                    std::size_t t_start, std::uint64_t seed);

/// Dispatches on config.kind.
SamplerResult reconstruct(const NoiseSchedule& s, const EpsModel& eps, const nn::Tensor<float>& z_start,
                          std::size_t t_start, const SamplerConfig& config, std::uint64_t seed);

/// The multistep combination for a buffer of predictions, newest first.
nn::Tensor<float> plms_combine(const std::vector<nn::Tensor<float>>& newest_first);

}  // namespace ldmood::diffusion
