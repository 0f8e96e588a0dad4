#pragma once

#include <cstddef>
#include <vector>

#include "ldmood/nn/tensor.hpp"

namespace ldmood::nn {

/// Sinusoidal timestep embedding: first half sin(t * f_i), second half
/// cos(t * f_i), with f_i = 10000^(-i / (dim/2)). `dim` must be even.
template <typename T>
Tensor<T> time_embedding(double t, std::size_t dim);

/// Mean of squared differences; the two tensors must have equal shapes.
template <typename T>
double mean_squared_error(const Tensor<T>& a, const Tensor<T>& b);

extern template Tensor<float> time_embedding<float>(double, std::size_t);
extern template Tensor<double> time_embedding<double>(double, std::size_t);
extern template double mean_squared_error<float>(const Tensor<float>&, const Tensor<float>&);
extern template double mean_squared_error<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace ldmood::nn
