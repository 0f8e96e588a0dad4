#include "ldmood/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "ldmood/error.hpp"

namespace ldmood::nn {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(values.begin(), values.end()) {
    if (values_.size() != shape_size(shape_)) {
        throw ValidationError("tensor of shape " + to_string(shape_) + " given " + std::to_string(values_.size()) +
                              " values");
    }
}

template <typename T>
void Tensor<T>::fill(T value) {
    std::fill(values_.begin(), values_.end(), value);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (shape_size(shape) != values_.size()) {
        throw ValidationError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.values_ = values_;
    return out;
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](T x) { return std::isfinite(x); });
}

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
    if (other.shape_ != shape_) {
        throw ValidationError("shape mismatch in +=: " + to_string(shape_) + " vs " + to_string(other.shape_));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

template <typename T>
Tensor<T>& Tensor<T>::operator*=(T scale) {
    for (auto& x : values_) x *= scale;
    return *this;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != b.rank() || a.rank() == 0 ||
        !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
        throw ValidationError("concat_channels shape mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    Shape shape = a.shape();
    shape[0] += b.extent(0);
    std::vector<T> values;
    values.reserve(a.size() + b.size());
    values.insert(values.end(), a.values().begin(), a.values().end());
    values.insert(values.end(), b.values().begin(), b.values().end());
    return Tensor<T>(std::move(shape), std::move(values));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, std::size_t first) {
    if (t.rank() == 0 || first > t.extent(0)) throw ValidationError("split_channels out of range");
    const std::size_t plane = spatial_size(t);
    Shape sa = t.shape();
    Shape sb = t.shape();
    sa[0] = first;
    sb[0] = t.extent(0) - first;
    const auto mid = t.values().begin() + static_cast<std::ptrdiff_t>(first * plane);
    return {Tensor<T>(sa, std::vector<T>(t.values().begin(), mid)), Tensor<T>(sb, std::vector<T>(mid, t.values().end()))};
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> concat_channels(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> concat_channels(const Tensor<double>&, const Tensor<double>&);
template std::pair<Tensor<float>, Tensor<float>> split_channels(const Tensor<float>&, std::size_t);
template std::pair<Tensor<double>, Tensor<double>> split_channels(const Tensor<double>&, std::size_t);

}  // namespace ldmood::nn
