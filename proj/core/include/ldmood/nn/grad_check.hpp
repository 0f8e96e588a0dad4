#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "ldmood/nn/parameter.hpp"
#include "ldmood/nn/tensor.hpp"

namespace ldmood::nn {

/// A differentiable piece of network exposed for finite-difference checking.
template <typename T>
struct Fragment {
    std::function<Tensor<T>(const Tensor<T>&)> forward;
    std::function<Tensor<T>(const Tensor<T>&)> backward;
    ParameterStore<T> params;
};

struct GradCheckReport {
    double max_param_error = 0.0;
    double max_input_error = 0.0;
    std::string worst;  // location of the largest error
    std::size_t checked = 0;

    double max_error() const noexcept { return max_param_error > max_input_error ? max_param_error : max_input_error; }
    bool passed(double tolerance) const noexcept { return max_error() < tolerance; }
};

struct GradCheckOptions {
    double step = 1e-5;
    /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
    double floor = 1e-6;
    /// Per-parameter cap on checked elements (0 = all); sampled deterministically.
    std::size_t max_per_tensor = 0;
    std::uint64_t seed = 7;
};

/// Central finite differences of L = sum(w * forward(x)) for fixed random w,
/// against the fragment's analytic gradients w.r.t. every parameter and the input.
template <typename T>
GradCheckReport grad_check(Fragment<T>& fragment, const Tensor<T>& input, const GradCheckOptions& options = {});

extern template GradCheckReport grad_check<float>(Fragment<float>&, const Tensor<float>&, const GradCheckOptions&);
extern template GradCheckReport grad_check<double>(Fragment<double>&, const Tensor<double>&, const GradCheckOptions&);

}  // namespace ldmood::nn
