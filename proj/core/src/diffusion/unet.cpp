#include "ldmood/diffusion/unet.hpp"

#include <nlohmann/json.hpp>

#include "ldmood/error.hpp"
#include "ldmood/nn/functional.hpp"

namespace ldmood::diffusion {

void UNetConfig::validate() const {
    if (in_channels == 0) throw ConfigError("unet: in_channels must be >= 1");
    if (channels.empty()) throw ConfigError("unet: need at least one level");
    for (auto c : channels)
        if (c == 0) throw ConfigError("unet: channel counts must be positive");
    if (channels.front() % 2 != 0) throw ConfigError("unet: first-level channels must be even (time embedding)");
    if (res_blocks == 0) throw ConfigError("unet: res_blocks must be >= 1");
    if (groups == 0) throw ConfigError("unet: groups must be >= 1");
}

UNetConfig UNetConfig::desk(std::size_t in_channels) {
    UNetConfig c;
    c.in_channels = in_channels;
    return c;
}

UNetConfig UNetConfig::paper_shape(std::size_t in_channels) {
    UNetConfig c;
    c.in_channels = in_channels;
    c.channels = {128, 256, 256};
    c.groups = 32;
    return c;
}

void to_json(nlohmann::json& j, const UNetConfig& c) {
    j = nlohmann::json{{"in_channels", c.in_channels}, {"channels", c.channels},         {"res_blocks", c.res_blocks},
                       {"groups", c.groups},           {"mid_attention", c.mid_attention}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, UNetConfig& c) {
    UNetConfig d;
    c.in_channels = j.value("in_channels", d.in_channels);
    c.channels = j.value("channels", d.channels);
    c.res_blocks = j.value("res_blocks", d.res_blocks);
    c.groups = j.value("groups", d.groups);
    c.mid_attention = j.value("mid_attention", d.mid_attention);
    c.seed = j.value("seed", d.seed);
}

template <typename T>
UNet<T>::UNet(const UNetConfig& config) : config_(config) {
    config_.validate();
    const auto& ch = config_.channels;
    const std::size_t L = ch.size(), td = config_.time_dim(), g = config_.groups;
    time1_ = nn::Linear<T>(ch[0], td);
    time2_ = nn::Linear<T>(td, td);
    in_conv_ = nn::Conv3d<T>(config_.in_channels, ch[0], 3, 1, 1);
    levels_.resize(L);
    std::size_t prev = ch[0];
    for (std::size_t i = 0; i < L; ++i) {
        Level& lv = levels_[i];
        const bool deepest = i + 1 == L;
        for (std::size_t b = 0; b < config_.res_blocks; ++b) lv.down.emplace_back(b == 0 ? prev : ch[i], ch[i], g, td);
        if (deepest && config_.mid_attention) lv.down_attn.emplace(ch[i], g);
        if (!deepest) lv.downsample.emplace(ch[i], ch[i], 3, 2, 1);
        for (std::size_t b = 0; b < config_.res_blocks; ++b) lv.up.emplace_back(b == 0 ? 2 * ch[i] : ch[i], ch[i], g, td);
        if (deepest && config_.mid_attention) lv.up_attn.emplace(ch[i], g);
        if (i > 0) {
            lv.upsample.emplace();
            lv.upsample_conv.emplace(ch[i], ch[i - 1], 3, 1, 1);
        }
        prev = ch[i];
    }
    mid1_ = nn::ResBlock<T>(ch[L - 1], ch[L - 1], g, td);
    mid2_ = nn::ResBlock<T>(ch[L - 1], ch[L - 1], g, td);
    if (config_.mid_attention) mid_attn_.emplace(ch[L - 1], g);
    out_norm_ = nn::GroupNorm<T>(nn::group_count(ch[0], g), ch[0]);
    out_conv_ = nn::Conv3d<T>(ch[0], config_.in_channels, 3, 1, 1);
    init(config_.seed);
}

template <typename T>
void UNet<T>::init(std::uint64_t seed) {
    Rng rng(seed);
    time1_.init(rng);
    time2_.init(rng);
    in_conv_.init(rng);
    for (Level& lv : levels_) {
        for (auto& b : lv.down) b.init(rng);
        if (lv.down_attn) lv.down_attn->init(rng);
        if (lv.downsample) lv.downsample->init(rng);
        for (auto& b : lv.up) b.init(rng);
        if (lv.up_attn) lv.up_attn->init(rng);
        if (lv.upsample_conv) lv.upsample_conv->init(rng);
    }
    mid1_.init(rng);
    if (mid_attn_) mid_attn_->init(rng);
    mid2_.init(rng);
    out_norm_.init();
    out_conv_.zero_init();
}

template <typename T>
nn::ParameterStore<T> UNet<T>::parameters() {
    nn::ParameterStore<T> s;
    time1_.collect(s, "time.0");
    time2_.collect(s, "time.1");
    in_conv_.collect(s, "in_conv");
    for (std::size_t i = 0; i < levels_.size(); ++i) {
        Level& lv = levels_[i];
        const std::string p = "level" + std::to_string(i);
        for (std::size_t b = 0; b < lv.down.size(); ++b) lv.down[b].collect(s, p + ".down" + std::to_string(b));
        if (lv.down_attn) lv.down_attn->collect(s, p + ".down_attn");
        if (lv.downsample) lv.downsample->collect(s, p + ".downsample");
        for (std::size_t b = 0; b < lv.up.size(); ++b) lv.up[b].collect(s, p + ".up" + std::to_string(b));
        if (lv.up_attn) lv.up_attn->collect(s, p + ".up_attn");
        if (lv.upsample_conv) lv.upsample_conv->collect(s, p + ".upsample_conv");
    }
    mid1_.collect(s, "mid.0");
    if (mid_attn_) mid_attn_->collect(s, "mid.attn");
    mid2_.collect(s, "mid.1");
    out_norm_.collect(s, "out_norm");
    out_conv_.collect(s, "out_conv");
    return s;
}

template <typename T>
nn::Tensor<T> UNet<T>::forward(const nn::Tensor<T>& z, double t) {
    if (z.rank() != 4 || z.extent(0) != config_.in_channels) {
        throw ValidationError("unet: expected [" + std::to_string(config_.in_channels) + ", h, w, d] input, got " +
                              nn::to_string(z.shape()));
    }
    const std::size_t f = std::size_t{1} << (levels_.size() - 1);
    for (std::size_t a = 1; a < 4; ++a) {
        if (z.extent(a) % f != 0) {
            throw ValidationError("unet: latent extents " + nn::to_string(z.shape()) + " not divisible by " + std::to_string(f));
        }
    }
    temb_ = time2_.forward(time_act_.forward(time1_.forward(nn::time_embedding<T>(t, config_.channels[0]))));

    std::vector<nn::Tensor<T>> skips;
    nn::Tensor<T> h = in_conv_.forward(z);
    for (Level& lv : levels_) {
        for (auto& b : lv.down) h = b.forward(h, &temb_);
        if (lv.down_attn) h = lv.down_attn->forward(h);
        skips.push_back(h);
        if (lv.downsample) h = lv.downsample->forward(h);
    }
    h = mid1_.forward(h, &temb_);
    if (mid_attn_) h = mid_attn_->forward(h);
    h = mid2_.forward(h, &temb_);
    skip_channels_.assign(levels_.size(), 0);
    for (std::size_t i = levels_.size(); i-- > 0;) {
        Level& lv = levels_[i];
        skip_channels_[i] = h.extent(0);
        h = nn::concat_channels(h, skips[i]);
        for (auto& b : lv.up) h = b.forward(h, &temb_);
        if (lv.up_attn) h = lv.up_attn->forward(h);
        if (lv.upsample) h = lv.upsample->forward(lv.upsample_conv->forward(h));
    }
    return out_conv_.forward(out_act_.forward(out_norm_.forward(h)));
}

template <typename T>
nn::Tensor<T> UNet<T>::backward(const nn::Tensor<T>& d_eps) {
    nn::Tensor<T> dtemb;
    nn::Tensor<T> g = out_norm_.backward(out_act_.backward(out_conv_.backward(d_eps)));
    std::vector<nn::Tensor<T>> dskips(levels_.size());
    for (std::size_t i = 0; i < levels_.size(); ++i) {
        Level& lv = levels_[i];
        if (lv.upsample) g = lv.upsample_conv->backward(lv.upsample->backward(g));
        if (lv.up_attn) g = lv.up_attn->backward(g);
        for (std::size_t b = lv.up.size(); b-- > 0;) g = lv.up[b].backward(g, &dtemb);
        auto [dh, ds] = nn::split_channels(g, skip_channels_[i]);
        g = std::move(dh);
        dskips[i] = std::move(ds);
    }
    g = mid2_.backward(g, &dtemb);
    if (mid_attn_) g = mid_attn_->backward(g);
    g = mid1_.backward(g, &dtemb);
    for (std::size_t i = levels_.size(); i-- > 0;) {
        Level& lv = levels_[i];
        if (lv.downsample) g = lv.downsample->backward(g);
        g += dskips[i];
        if (lv.down_attn) g = lv.down_attn->backward(g);
        for (std::size_t b = lv.down.size(); b-- > 0;) g = lv.down[b].backward(g, &dtemb);
    }
    time1_.backward(time_act_.backward(time2_.backward(dtemb)));
    return in_conv_.backward(g);
}

template class UNet<float>;
template class UNet<double>;

}  // namespace ldmood::diffusion
