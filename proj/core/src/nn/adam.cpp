#include "ldmood/nn/adam.hpp"

#include <cmath>

#include "ldmood/error.hpp"

namespace ldmood::nn {

template <typename T>
void Adam<T>::ensure_state(const ParameterStore<T>& params) {
    const auto& entries = params.entries();
    if (state_.names.empty()) {
        for (const auto& [name, p] : entries) {
            state_.names.push_back(name);
            state_.m.emplace_back(p->value.shape());
            state_.v.emplace_back(p->value.shape());
        }
        return;
    }
    if (state_.names.size() != entries.size()) throw ValidationError("adam: parameter set changed between steps");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (state_.names[i] != entries[i].first || state_.m[i].shape() != entries[i].second->value.shape()) {
            throw ValidationError("adam: state does not match parameter '" + entries[i].first + "'");
        }
    }
}

template <typename T>
void Adam<T>::step(ParameterStore<T>& params) {
    ensure_state(params);
    const auto& entries = params.entries();
    for (const auto& [name, p] : entries) {
        for (std::size_t j = 0; j < p->grad.size(); ++j) {
            if (!std::isfinite(p->grad[j])) {
                throw NumericalError("adam: non-finite gradient in '" + name + "' at element " + std::to_string(j) +
                                     " (step " + std::to_string(state_.step + 1) + ")");
            }
        }
    }
    ++state_.step;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Parameter<T>& p = *entries[i].second;
        Tensor<T>& m = state_.m[i];
        Tensor<T>& v = state_.v[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const T g = p.grad[j];
            m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * g);
            v[j] = static_cast<T>(b2 * v[j] + (1.0 - b2) * g * g);
            const double m_hat = m[j] / c1;
            const double v_hat = v[j] / c2;
            p.value[j] -= static_cast<T>(config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon));
        }
    }
}

template <typename T>
void Adam<T>::reset_rows(const std::string& name, const std::vector<std::size_t>& rows, std::size_t row_size) {
    for (std::size_t i = 0; i < state_.names.size(); ++i) {
        if (state_.names[i] != name) continue;
        for (std::size_t r : rows)
            for (std::size_t j = r * row_size; j < (r + 1) * row_size && j < state_.m[i].size(); ++j) {
                state_.m[i][j] = T{0};
                state_.v[i][j] = T{0};
            }
    }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace ldmood::nn
