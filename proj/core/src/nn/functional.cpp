#include "ldmood/nn/functional.hpp"

#include <cmath>

#include "ldmood/error.hpp"

namespace ldmood::nn {

template <typename T>
Tensor<T> time_embedding(double t, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) throw ValidationError("time_embedding dim must be positive and even");
    const std::size_t half = dim / 2;
    Tensor<T> out({dim});
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        out[i] = static_cast<T>(std::sin(t * freq));
        out[half + i] = static_cast<T>(std::cos(t * freq));
    }
    return out;
}

template <typename T>
double mean_squared_error(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw ValidationError("mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return a.empty() ? 0.0 : acc / static_cast<double>(a.size());
}

template Tensor<float> time_embedding<float>(double, std::size_t);
template Tensor<double> time_embedding<double>(double, std::size_t);
template double mean_squared_error<float>(const Tensor<float>&, const Tensor<float>&);
template double mean_squared_error<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace ldmood::nn
