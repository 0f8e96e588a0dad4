#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ldmood/nn/parameter.hpp"
#include "ldmood/nn/tensor.hpp"
#include "ldmood/rng.hpp"

namespace ldmood::nn {

// Layers follow one protocol: forward() caches whatever backward() needs,
// backward() takes dL/d(output), accumulates parameter gradients, and returns
// dL/d(input). A backward() must follow the forward() it differentiates.

/// 3D cross-correlation with zero padding, input [C_in, H, W, D].
template <typename T>
class Conv3d {
public:
    Conv3d() = default;
    Conv3d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
           std::size_t padding = 0);

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

    void init(Rng& rng);
    void zero_init();
    void collect(ParameterStore<T>& store, const std::string& prefix);

    /// H' = (H + 2p - k) / s + 1, per spatial axis.
    Shape output_shape(const Shape& input) const;

    std::size_t in_channels() const noexcept { return in_; }
    std::size_t out_channels() const noexcept { return out_; }

    Parameter<T> weight;  // [C_out, C_in, k, k, k]
    Parameter<T> bias;    // [C_out]

private:
    std::size_t in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, padding_ = 0;
    Shape in_shape_;
    AlignedVector<T> cols_;
};

/// Per-group standardization then per-channel affine, eps = 1e-5.
template <typename T>
class GroupNorm {
public:
    static constexpr double kEps = 1e-5;

    GroupNorm() = default;
    GroupNorm(std::size_t groups, std::size_t channels);

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);
    void init();
    void collect(ParameterStore<T>& store, const std::string& prefix);

    Parameter<T> scale;  // [C]
    Parameter<T> shift;  // [C]

private:
    std::size_t groups_ = 1, channels_ = 0;
    Tensor<T> normalized_;
    std::vector<double> inv_std_;
};

template <typename T>
class SiLU {
public:
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

private:
    Tensor<T> input_;
};

template <typename T>
class Sigmoid {
public:
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

private:
    Tensor<T> output_;
};

/// y = W x + b on a vector [in].
template <typename T>
class Linear {
public:
    Linear() = default;
    Linear(std::size_t in_features, std::size_t out_features);

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);
    void init(Rng& rng);
    void collect(ParameterStore<T>& store, const std::string& prefix);

    Parameter<T> weight;  // [out, in]
    Parameter<T> bias;    // [out]

private:
    std::size_t in_ = 0, out_ = 0;
    Tensor<T> input_;
};

/// Nearest-neighbour 2x upsampling of every spatial axis.
template <typename T>
class Upsample2x {
public:
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

private:
    Shape in_shape_;
};

/// Depth-to-space: [8C, H, W, D] -> [C, 2H, 2W, 2D]. Channel 8c + 4a + 2b + e
/// feeds output voxel (2h + a, 2w + b, 2d + e) of channel c.
template <typename T>
class PixelShuffle3d {
public:
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

private:
    Shape in_shape_;
};

/// norm -> silu -> conv, twice, plus a skip (1x1x1 projection when channels
/// change). With `time_dim > 0`, a projected silu(time embedding) is added per
/// channel after the first conv.
template <typename T>
class ResBlock {
public:
    ResBlock() = default;
    ResBlock(std::size_t in_channels, std::size_t out_channels, std::size_t groups, std::size_t time_dim = 0);

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>* time_embedding = nullptr);
    /// Accumulates into `d_time_embedding` when the block is time-conditioned.
    Tensor<T> backward(const Tensor<T>& dy, Tensor<T>* d_time_embedding = nullptr);

    void init(Rng& rng);
    void collect(ParameterStore<T>& store, const std::string& prefix);

    std::size_t in_channels() const noexcept { return in_; }
    std::size_t out_channels() const noexcept { return out_; }

private:
    std::size_t in_ = 0, out_ = 0;
    GroupNorm<T> norm1_, norm2_;
    SiLU<T> act1_, act2_, act_time_;
    Conv3d<T> conv1_, conv2_;
    std::optional<Conv3d<T>> skip_;
    std::optional<Linear<T>> time_proj_;
};

/// Largest divisor of `channels` not exceeding `preferred`.
std::size_t group_count(std::size_t channels, std::size_t preferred = 8);

#define LDMOOD_EXTERN_LAYER(L)        \
    extern template class L<float>;   \
    extern template class L<double>;
LDMOOD_EXTERN_LAYER(Conv3d)
LDMOOD_EXTERN_LAYER(GroupNorm)
LDMOOD_EXTERN_LAYER(SiLU)
LDMOOD_EXTERN_LAYER(Sigmoid)
LDMOOD_EXTERN_LAYER(Linear)
LDMOOD_EXTERN_LAYER(Upsample2x)
LDMOOD_EXTERN_LAYER(PixelShuffle3d)
LDMOOD_EXTERN_LAYER(ResBlock)
#undef LDMOOD_EXTERN_LAYER

}  // namespace ldmood::nn
