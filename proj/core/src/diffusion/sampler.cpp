#include "ldmood/diffusion/sampler.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "ldmood/error.hpp"
#include "ldmood/rng.hpp"

namespace ldmood::diffusion {

void SamplerConfig::validate(std::size_t T) const {
    if (inference_steps == 0 || inference_steps > T) {
        throw ConfigError("sampler: inference steps must be in [1, " + std::to_string(T) + "]");
    }
    if (max_order < 1 || max_order > 4) throw ConfigError("sampler: max_order must be in [1, 4]");
}

void to_json(nlohmann::json& j, const SamplerConfig& c) {
    j = nlohmann::json{{"kind", c.kind == SamplerKind::Plms ? "plms" : "ancestral"},
                       {"inference_steps", c.inference_steps},
                       {"max_order", c.max_order}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
    SamplerConfig d;
    const std::string kind = j.value("kind", std::string("plms"));
    if (kind == "plms") {
        c.kind = SamplerKind::Plms;
    } else if (kind == "ancestral") {
        c.kind = SamplerKind::Ancestral;
    } else {
        throw ConfigError("sampler: unknown kind '" + kind + "'");
    }
    c.inference_steps = j.value("inference_steps", d.inference_steps);
    c.max_order = j.value("max_order", d.max_order);
}

std::vector<std::size_t> inference_grid(std::size_t T, std::size_t steps) {
    if (steps == 0 || steps > T) throw ConfigError("inference grid: need 1 <= steps <= T");
    std::vector<std::size_t> grid(steps);
    for (std::size_t k = 0; k < steps; ++k) grid[k] = k * T / steps;
    return grid;
}

nn::Tensor<float> plms_combine(const std::vector<nn::Tensor<float>>& e) {
    if (e.empty()) throw ValidationError("plms: empty prediction buffer");
    static const double kCoef[4][4] = {{1.0, 0, 0, 0},
                                       {3.0 / 2, -1.0 / 2, 0, 0},
                                       {23.0 / 12, -16.0 / 12, 5.0 / 12, 0},
                                       {55.0 / 24, -59.0 / 24, 37.0 / 24, -9.0 / 24}};
    const std::size_t order = std::min<std::size_t>(e.size(), 4);
    const double* c = kCoef[order - 1];
    nn::Tensor<float> out(e[0].shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < order; ++k) acc += c[k] * e[k][i];
        out[i] = static_cast<float>(acc);
    }
    return out;
}

SamplerResult plms_reconstruct(const NoiseSchedule& s, const EpsModel& eps, const nn::Tensor<float>& z_start,
                               std::size_t t_start, const SamplerConfig& config) {
    config.validate(s.steps);
    if (t_start > s.steps) throw ValidationError("plms: t_start=" + std::to_string(t_start) + " exceeds T");
    SamplerResult r;
    if (t_start == 0) {
        r.z0 = z_start;
        return r;
    }
    const auto grid = inference_grid(s.steps, config.inference_steps);
    std::vector<std::size_t> targets;
    for (auto it = grid.rbegin(); it != grid.rend(); ++it)
        if (*it < t_start) targets.push_back(*it);
    if (targets.empty()) {
        r.z0 = z_start;
        r.below_grid = true;
        return r;
    }
    std::vector<nn::Tensor<float>> buffer;  // newest first
    nn::Tensor<float> z = z_start;
    std::size_t t = t_start;
    for (std::size_t next : targets) {
        buffer.insert(buffer.begin(), eps(z, t));
        ++r.evaluations;
        if (buffer.size() > config.max_order) buffer.pop_back();
        z = ddim_transfer(s, z, plms_combine(buffer), t, next);
        t = next;
    }
    r.z0 = std::move(z);
    return r;
}

SamplerResult ancestral_reconstruct(const NoiseSchedule& s, const EpsModel& eps, const nn::Tensor<float>& z_start,
                                    std::size_t t_start, std::uint64_t seed) {
    if (t_start > s.steps) throw ValidationError("ancestral: t_start=" + std::to_string(t_start) + " exceeds T");
    SamplerResult r;
    nn::Tensor<float> z = z_start;
    for (std::size_t t = t_start; t >= 1; --t) {
        const nn::Tensor<float> e = eps(z, t);
        ++r.evaluations;
        const nn::Tensor<float> noise =
            t == 1 ? nn::Tensor<float>(z.shape()) : gaussian_like<float>(z.shape(), derive_seed(seed, t));
        z = ddpm_step(s, z, e, t, noise);
    }
    r.z0 = std::move(z);
    return r;
}

SamplerResult reconstruct(const NoiseSchedule& s, const EpsModel& eps, const nn::Tensor<float>& z_start,
                          std::size_t t_start, const SamplerConfig& config, std::uint64_t seed) {
    return config.kind == SamplerKind::Plms ? plms_reconstruct(s, eps, z_start, t_start, config)
                                            : ancestral_reconstruct(s, eps, z_start, t_start, seed);
}

}  // namespace ldmood::diffusion
