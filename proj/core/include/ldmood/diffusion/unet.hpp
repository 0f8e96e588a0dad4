#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ldmood/nn/attention.hpp"
#include "ldmood/nn/layers.hpp"

namespace ldmood::diffusion {

struct UNetConfig {
    std::size_t in_channels = 8;  // latent embedding dim n
    std::vector<std::size_t> channels{32, 64};
    std::size_t res_blocks = 1;
    std::size_t groups = 8;
    bool mid_attention = true;  // attention in the deepest level and the middle block
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t levels() const noexcept { return channels.size(); }
    std::size_t time_dim() const noexcept { return 4 * channels.front(); }

    static UNetConfig desk(std::size_t in_channels = 8);
    /// Three levels (128, 256, 256), one residual block each.
    static UNetConfig paper_shape(std::size_t in_channels = 64);
};

void to_json(nlohmann::json& j, const UNetConfig& c);
void from_json(const nlohmann::json& j, UNetConfig& c);

/// Time-conditioned epsilon-prediction UNet over [n, h, w, d] latents.
template <typename T>
class UNet {
public:
    UNet() = default;
    explicit UNet(const UNetConfig& config);

    const UNetConfig& config() const noexcept { return config_; }

    nn::Tensor<T> forward(const nn::Tensor<T>& z, double t);
    /// Accumulates parameter gradients; returns dL/dz.
    nn::Tensor<T> backward(const nn::Tensor<T>& d_eps);

    void init(std::uint64_t seed);
    nn::ParameterStore<T> parameters();

private:
    struct Level {
        std::vector<nn::ResBlock<T>> down;
        std::optional<nn::SelfAttention3d<T>> down_attn;
        std::optional<nn::Conv3d<T>> downsample;
        std::vector<nn::ResBlock<T>> up;
        std::optional<nn::SelfAttention3d<T>> up_attn;
        std::optional<nn::Upsample2x<T>> upsample;
        std::optional<nn::Conv3d<T>> upsample_conv;
    };

    UNetConfig config_;
    nn::Linear<T> time1_, time2_;
    nn::SiLU<T> time_act_;
    nn::Conv3d<T> in_conv_;
    std::vector<Level> levels_;
    nn::ResBlock<T> mid1_, mid2_;
    std::optional<nn::SelfAttention3d<T>> mid_attn_;
    nn::GroupNorm<T> out_norm_;
    nn::SiLU<T> out_act_;
    nn::Conv3d<T> out_conv_;

    nn::Tensor<T> temb_;
    std::vector<std::size_t> skip_channels_;
};

extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace ldmood::diffusion
