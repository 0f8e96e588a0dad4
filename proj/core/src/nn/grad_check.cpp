#include "ldmood/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ldmood/error.hpp"

namespace ldmood::nn {

namespace {

template <typename T>
double weighted_sum(const Tensor<T>& y, const Tensor<T>& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += static_cast<double>(y[i]) * w[i];
    return acc;
}

std::vector<std::size_t> pick(std::size_t n, std::size_t cap, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (cap == 0 || cap >= n) return idx;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

template <typename T>
GradCheckReport grad_check(Fragment<T>& fragment, const Tensor<T>& input, const GradCheckOptions& options) {
    Rng rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    fragment.params.zero_grad();
    const Tensor<T> y = fragment.forward(input);
    Tensor<T> w(y.shape());
    for (auto& x : w.values()) x = static_cast<T>(normal(rng));
    const Tensor<T> dx = fragment.backward(w);
    if (dx.shape() != input.shape()) throw ValidationError("grad_check: backward returned a wrongly shaped gradient");

    GradCheckReport report;
    auto relative = [&](double analytic, double numeric) {
        return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), options.floor});
    };
    const double h = options.step;

    for (const auto& [name, p] : fragment.params.entries()) {
        const Tensor<T> analytic = p->grad;
        for (std::size_t i : pick(p->value.size(), options.max_per_tensor, rng)) {
            const T saved = p->value[i];
            p->value[i] = static_cast<T>(saved + h);
            const double plus = weighted_sum(fragment.forward(input), w);
            p->value[i] = static_cast<T>(saved - h);
            const double minus = weighted_sum(fragment.forward(input), w);
            p->value[i] = saved;
            const double err = relative(analytic[i], (plus - minus) / (2.0 * h));
            ++report.checked;
            if (err > report.max_param_error) {
                report.max_param_error = err;
                report.worst = name + "[" + std::to_string(i) + "]";
            }
        }
    }

    Tensor<T> x = input;
    for (std::size_t i : pick(x.size(), options.max_per_tensor, rng)) {
        const T saved = x[i];
        x[i] = static_cast<T>(saved + h);
        const double plus = weighted_sum(fragment.forward(x), w);
        x[i] = static_cast<T>(saved - h);
        const double minus = weighted_sum(fragment.forward(x), w);
        x[i] = saved;
        const double err = relative(dx[i], (plus - minus) / (2.0 * h));
        ++report.checked;
        if (err > report.max_input_error) {
            report.max_input_error = err;
            if (err >= report.max_param_error) report.worst = "input[" + std::to_string(i) + "]";
        }
    }
    return report;
}

template GradCheckReport grad_check<float>(Fragment<float>&, const Tensor<float>&, const GradCheckOptions&);
template GradCheckReport grad_check<double>(Fragment<double>&, const Tensor<double>&, const GradCheckOptions&);

}  // namespace ldmood::nn
