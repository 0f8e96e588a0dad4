#pragma once

#include <cstddef>
#include <string>

#include "ldmood/nn/layers.hpp"

namespace ldmood::nn {

/// Single-head scaled dot-product self-attention over the flattened spatial
/// positions of a [C, h, w, d] tensor, with a pre-norm and residual connection.
/// The output projection starts at zero, so a freshly initialized layer is the identity.
template <typename T>
class SelfAttention3d {
public:
    static constexpr std::size_t kDefaultCap = 512;

    SelfAttention3d() = default;
    SelfAttention3d(std::size_t channels, std::size_t groups, std::size_t max_positions = kDefaultCap);

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

    void init(Rng& rng, bool zero_output = true);
    void collect(ParameterStore<T>& store, const std::string& prefix);

    std::size_t max_positions() const noexcept { return cap_; }

private:
    std::size_t channels_ = 0, cap_ = kDefaultCap;
    GroupNorm<T> norm_;
    Parameter<T> wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
    // Cached activations, all [C, N] except attn_ which is [N, N].
    AlignedVector<T> h_, q_, k_, v_, attn_, o_;
    Shape shape_;
};

extern template class SelfAttention3d<float>;
extern template class SelfAttention3d<double>;

}  // namespace ldmood::nn
