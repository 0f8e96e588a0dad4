#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ldmood/nn/parameter.hpp"

namespace ldmood::nn {

struct AdamConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second moment accumulators, kept in ParameterStore order.
template <typename T>
struct AdamState {
    std::vector<std::string> names;
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    std::uint64_t step = 0;
};

/// Bias-corrected Adam. Throws NumericalError (naming the parameter) on a non-finite gradient.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    void step(ParameterStore<T>& params);

    const AdamConfig& config() const noexcept { return config_; }
    void set_learning_rate(double lr) noexcept { config_.learning_rate = lr; }
    AdamState<T>& state() noexcept { return state_; }
    const AdamState<T>& state() const noexcept { return state_; }

    /// Zero the moments of selected rows of a parameter (used after codebook re-seeding).
    void reset_rows(const std::string& name, const std::vector<std::size_t>& rows, std::size_t row_size);

private:
    void ensure_state(const ParameterStore<T>& params);

    AdamConfig config_;
    AdamState<T> state_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace ldmood::nn
