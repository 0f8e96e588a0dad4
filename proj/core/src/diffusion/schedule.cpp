#include "ldmood/diffusion/schedule.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "ldmood/error.hpp"
#include "ldmood/rng.hpp"

namespace ldmood::diffusion {

NoiseSchedule make_scaled_linear_schedule(std::size_t steps, double beta_start, double beta_end) {
    if (steps == 0) throw ConfigError("schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) || (steps > 1 && beta_start == beta_end)) {
        throw ConfigError("schedule: need 0 < beta_start < beta_end < 1");
    }
    NoiseSchedule s;
    s.steps = steps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.beta.assign(steps + 1, 0.0);
    s.alpha.assign(steps + 1, 1.0);
    s.alpha_bar.assign(steps + 1, 1.0);
    s.sigma.assign(steps + 1, 0.0);
    const double a = std::sqrt(beta_start), b = std::sqrt(beta_end);
    for (std::size_t t = 1; t <= steps; ++t) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
        const double root = a + frac * (b - a);
        s.beta[t] = root * root;
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
        s.sigma[t] = std::sqrt(s.beta[t]);
    }
    return s;
}

void to_json(nlohmann::json& j, const NoiseSchedule& s) {
    j = nlohmann::json{{"kind", "scaled_linear"}, {"steps", s.steps}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

void from_json(const nlohmann::json& j, NoiseSchedule& s) {
    s = make_scaled_linear_schedule(j.value("steps", std::size_t{1000}), j.value("beta_start", 0.0015),
                                    j.value("beta_end", 0.0195));
}

namespace {

template <typename T>
void check_same(const nn::Tensor<T>& a, const nn::Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ValidationError(std::string(what) + ": shape " + nn::to_string(a.shape()) + " vs " + nn::to_string(b.shape()));
    }
}

}  // namespace

template <typename T>
nn::Tensor<T> forward_noise(const NoiseSchedule& s, const nn::Tensor<T>& z0, std::size_t t, const nn::Tensor<T>& eps) {
    if (t < 1 || t > s.steps) throw ValidationError("forward_noise: t=" + std::to_string(t) + " outside [1, T]");
    check_same(z0, eps, "forward_noise");
    const double a = std::sqrt(s.alpha_bar[t]), b = std::sqrt(1.0 - s.alpha_bar[t]);
    nn::Tensor<T> out(z0.shape());
    for (std::size_t i = 0; i < z0.size(); ++i) out[i] = static_cast<T>(a * z0[i] + b * eps[i]);
    return out;
}

template <typename T>
nn::Tensor<T> ddpm_step(const NoiseSchedule& s, const nn::Tensor<T>& z_t, const nn::Tensor<T>& eps_hat, std::size_t t,
                        const nn::Tensor<T>& noise) {
    if (t < 1 || t > s.steps) throw ValidationError("ddpm_step: t=" + std::to_string(t) + " outside [1, T]");
    check_same(z_t, eps_hat, "ddpm_step");
    check_same(z_t, noise, "ddpm_step");
    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha[t]);
    const double coef = s.beta[t] / std::sqrt(1.0 - s.alpha_bar[t]);
    const double sigma = s.sigma[t];
    nn::Tensor<T> out(z_t.shape());
    for (std::size_t i = 0; i < z_t.size(); ++i) {
        out[i] = static_cast<T>(inv_sqrt_alpha * (z_t[i] - coef * eps_hat[i]) + sigma * noise[i]);
    }
    return out;
}

template <typename T>
nn::Tensor<T> ddim_transfer(const NoiseSchedule& s, const nn::Tensor<T>& z_t, const nn::Tensor<T>& eps_hat,
                            std::size_t t, std::size_t target) {
    if (target >= t) throw ValidationError("ddim_transfer: target " + std::to_string(target) + " must be below t=" + std::to_string(t));
    if (t > s.steps) throw ValidationError("ddim_transfer: t=" + std::to_string(t) + " exceeds T");
    check_same(z_t, eps_hat, "ddim_transfer");
    const double ab_t = s.alpha_bar[t], ab_s = s.alpha_bar[target];
    const double sa_t = std::sqrt(ab_t), sb_t = std::sqrt(1.0 - ab_t);
    const double sa_s = std::sqrt(ab_s), sb_s = std::sqrt(1.0 - ab_s);
    nn::Tensor<T> out(z_t.shape());
    for (std::size_t i = 0; i < z_t.size(); ++i) {
        const double x0 = (z_t[i] - sb_t * eps_hat[i]) / sa_t;
        out[i] = static_cast<T>(target == 0 ? x0 : sa_s * x0 + sb_s * eps_hat[i]);
    }
    return out;
}

template <typename T>
nn::Tensor<T> gaussian_like(const nn::Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    nn::Tensor<T> out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(normal(rng));
    return out;
}

#define LDMOOD_INSTANTIATE(T)                                                                                       \
    template nn::Tensor<T> forward_noise<T>(const NoiseSchedule&, const nn::Tensor<T>&, std::size_t,              \
                                            const nn::Tensor<T>&);                                                \
    template nn::Tensor<T> ddpm_step<T>(const NoiseSchedule&, const nn::Tensor<T>&, const nn::Tensor<T>&,         \
                                        std::size_t, const nn::Tensor<T>&);                                       \
    template nn::Tensor<T> ddim_transfer<T>(const NoiseSchedule&, const nn::Tensor<T>&, const nn::Tensor<T>&,     \
                                            std::size_t, std::size_t);                                            \
    template nn::Tensor<T> gaussian_like<T>(const nn::Shape&, std::uint64_t);
LDMOOD_INSTANTIATE(float)
LDMOOD_INSTANTIATE(double)
#undef LDMOOD_INSTANTIATE

}  // namespace ldmood::diffusion
