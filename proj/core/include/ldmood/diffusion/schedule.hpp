#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ldmood/nn/tensor.hpp"

namespace ldmood::diffusion {

/// Per-timestep arrays indexed by t in [0, T]. Index 0 is the clean state
/// (beta = 0, alpha_bar = 1); the forward process uses t >= 1.
struct NoiseSchedule {
    std::size_t steps = 0;  // T
    double beta_start = 0.0, beta_end = 0.0;
    std::vector<double> beta, alpha, alpha_bar, sigma;

    double alpha_bar_at(std::size_t t) const { return alpha_bar.at(t); }
};

/// beta_t linear in sqrt(beta) between the endpoints.
NoiseSchedule make_scaled_linear_schedule(std::size_t steps = 1000, double beta_start = 0.0015, double beta_end = 0.0195);

void to_json(nlohmann::json& j, const NoiseSchedule& s);
/// Rebuilds the arrays from (steps, beta_start, beta_end).
void from_json(const nlohmann::json& j, NoiseSchedule& s);

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, for 1 <= t <= T.
template <typename T>
nn::Tensor<T> forward_noise(const NoiseSchedule& s, const nn::Tensor<T>& z0, std::size_t t, const nn::Tensor<T>& eps);

/// One ancestral step t -> t-1 with sigma_t = sqrt(beta_t); pass a zero `noise` at t = 1.
template <typename T>
nn::Tensor<T> ddpm_step(const NoiseSchedule& s, const nn::Tensor<T>& z_t, const nn::Tensor<T>& eps_hat, std::size_t t,
                        const nn::Tensor<T>& noise);

/// Deterministic transfer t -> s (s < t) through the implied clean estimate.
template <typename T>
nn::Tensor<T> ddim_transfer(const NoiseSchedule& s, const nn::Tensor<T>& z_t, const nn::Tensor<T>& eps_hat,
                            std::size_t t, std::size_t target);

/// Standard-normal tensor of the given shape.
template <typename T>
nn::Tensor<T> gaussian_like(const nn::Shape& shape, std::uint64_t seed);

}  // namespace ldmood::diffusion
