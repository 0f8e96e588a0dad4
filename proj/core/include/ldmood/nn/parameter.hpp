#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ldmood/nn/tensor.hpp"
#include "ldmood/rng.hpp"

namespace ldmood::nn {

/// A trainable tensor and its accumulated gradient.
template <typename T>
struct Parameter {
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    explicit Parameter(Shape shape) : value(shape), grad(shape) {}

    void zero_grad() { grad.fill(T{0}); }
    /// U(-bound, bound), the usual 1/sqrt(fan_in) scheme.
    void init_uniform(Rng& rng, double bound);
};

/// Ordered name -> parameter view over a model. Names are unique.
template <typename T>
class ParameterStore {
public:
    using Entry = std::pair<std::string, Parameter<T>*>;

    void add(const std::string& name, Parameter<T>& p);
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    Parameter<T>& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    std::size_t scalar_count() const;
    void zero_grad();

private:
    std::vector<Entry> entries_;
};

extern template struct Parameter<float>;
extern template struct Parameter<double>;
extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace ldmood::nn
