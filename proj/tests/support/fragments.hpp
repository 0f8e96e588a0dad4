#pragma once

// Every differentiable piece of the two networks wrapped for finite-difference
// checking in 64-bit. Shared by the unit tests and the acceptance binary.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ldmood/diffusion/unet.hpp"
#include "ldmood/nn/attention.hpp"
#include "ldmood/nn/grad_check.hpp"
#include "ldmood/nn/layers.hpp"
#include "ldmood/vqvae/model.hpp"

namespace ldmood::test {

using D = double;
using nn::Fragment;
using nn::Tensor;

struct CheckCase {
    std::string name;
    Fragment<D> fragment;
    Tensor<D> input;
    double tolerance = 1e-3;
    std::size_t max_per_tensor = 0;
};

inline Tensor<D> random_tensor(nn::Shape shape, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    Tensor<D> t(std::move(shape));
    for (auto& x : t.values()) x = n(rng);
    return t;
}

/// Moves every parameter off its initial value so zero-initialized projections carry gradient.
inline void jitter(const nn::ParameterStore<D>& store, std::uint64_t seed, double scale = 0.2) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    for (const auto& [name, p] : store.entries())
        for (auto& x : p->value.values()) x += n(rng);
}

template <typename Layer>
CheckCase simple_case(std::string name, std::shared_ptr<Layer> layer, Tensor<D> input, double tol = 1e-3) {
    Fragment<D> f;
    f.forward = [layer](const Tensor<D>& x) { return layer->forward(x); };
    f.backward = [layer](const Tensor<D>& dy) { return layer->backward(dy); };
    if constexpr (requires { layer->collect(f.params, std::string()); }) layer->collect(f.params, name);
    return {std::move(name), std::move(f), std::move(input), tol, 0};
}

template <typename Layer>
CheckCase param_case(std::string name, std::shared_ptr<Layer> layer, Tensor<D> input, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    layer->init(rng);
    return simple_case(std::move(name), layer, std::move(input));
}

inline std::vector<CheckCase> layer_cases() {
    std::vector<CheckCase> cases;
    std::mt19937_64 rng(11);

    auto linear = std::make_shared<nn::Linear<D>>(6, 5);
    linear->init(rng);
    cases.push_back(simple_case("linear", linear, random_tensor({6}, 1), 1e-6));

    cases.push_back(param_case("conv3d_k3_s1_p1", std::make_shared<nn::Conv3d<D>>(2, 3, 3, 1, 1), random_tensor({2, 5, 5, 5}, 2), 3));
    cases.push_back(param_case("conv3d_k3_s2_p1", std::make_shared<nn::Conv3d<D>>(2, 3, 3, 2, 1), random_tensor({2, 6, 6, 6}, 3), 4));
    cases.push_back(param_case("conv3d_k3_s1_p0", std::make_shared<nn::Conv3d<D>>(2, 2, 3, 1, 0), random_tensor({2, 5, 5, 5}, 4), 5));
    cases.push_back(param_case("conv3d_k1", std::make_shared<nn::Conv3d<D>>(3, 2, 1, 1, 0), random_tensor({3, 3, 3, 3}, 5), 6));

    auto gn = std::make_shared<nn::GroupNorm<D>>(2, 4);
    gn->init();
    auto gn_case = simple_case("group_norm", gn, random_tensor({4, 3, 3, 3}, 6));
    jitter(gn_case.fragment.params, 7);
    cases.push_back(std::move(gn_case));

    cases.push_back(simple_case("silu", std::make_shared<nn::SiLU<D>>(), random_tensor({2, 3, 3, 3}, 8, 2.0)));
    cases.push_back(simple_case("sigmoid", std::make_shared<nn::Sigmoid<D>>(), random_tensor({2, 3, 3, 3}, 9, 2.0)));
    cases.push_back(simple_case("upsample2x", std::make_shared<nn::Upsample2x<D>>(), random_tensor({2, 2, 3, 2}, 10)));
    cases.push_back(simple_case("pixel_shuffle3d", std::make_shared<nn::PixelShuffle3d<D>>(), random_tensor({16, 2, 2, 2}, 11)));

    auto attn = std::make_shared<nn::SelfAttention3d<D>>(4, 2);
    attn->init(rng);
    auto attn_case = simple_case("self_attention3d", attn, random_tensor({4, 2, 2, 2}, 12));
    jitter(attn_case.fragment.params, 13);
    cases.push_back(std::move(attn_case));
    return cases;
}

inline std::vector<CheckCase> block_cases() {
    std::vector<CheckCase> cases;
    std::mt19937_64 rng(21);

    auto same = std::make_shared<nn::ResBlock<D>>(4, 4, 2);
    same->init(rng);
    auto c1 = simple_case("resblock", same, random_tensor({4, 3, 3, 3}, 22));
    jitter(c1.fragment.params, 23, 0.05);
    cases.push_back(std::move(c1));

    auto proj = std::make_shared<nn::ResBlock<D>>(4, 6, 2);
    proj->init(rng);
    auto c2 = simple_case("resblock_projection", proj, random_tensor({4, 3, 3, 3}, 24));
    jitter(c2.fragment.params, 25, 0.05);
    cases.push_back(std::move(c2));

    // Time-conditioned block, differentiated w.r.t. the input and then w.r.t. the embedding.
    auto timed = std::make_shared<nn::ResBlock<D>>(4, 4, 2, 6);
    timed->init(rng);
    auto temb = std::make_shared<Tensor<D>>(random_tensor({6}, 26));
    Fragment<D> f;
    f.forward = [timed, temb](const Tensor<D>& x) { return timed->forward(x, temb.get()); };
    f.backward = [timed](const Tensor<D>& dy) {
        Tensor<D> dt({6});
        return timed->backward(dy, &dt);
    };
    timed->collect(f.params, "resblock_time");
    jitter(f.params, 27, 0.05);
    cases.push_back({"resblock_time", f, random_tensor({4, 3, 3, 3}, 28), 1e-3, 0});

    auto x_fixed = std::make_shared<Tensor<D>>(random_tensor({4, 3, 3, 3}, 29));
    Fragment<D> g;
    g.forward = [timed, x_fixed](const Tensor<D>& e) { return timed->forward(*x_fixed, &e); };
    g.backward = [timed](const Tensor<D>& dy) {
        Tensor<D> dt({6});
        timed->backward(dy, &dt);
        return dt;
    };
    cases.push_back({"resblock_time_embedding", g, random_tensor({6}, 30), 1e-3, 0});
    return cases;
}

inline vq::VQConfig tiny_vq_config() {
    vq::VQConfig c;
    c.levels = 2;
    c.channels = {4, 4};
    c.embedding_dim = 3;
    c.codebook_size = 8;
    c.res_blocks = 1;
    c.groups = 2;
    return c;
}

inline std::vector<CheckCase> model_cases() {
    std::vector<CheckCase> cases;
    const vq::VQConfig cfg = tiny_vq_config();

    auto enc = std::make_shared<vq::Encoder<D>>(cfg);
    std::mt19937_64 rng(31);
    enc->init(rng);
    CheckCase e = simple_case("vq_encoder", enc, random_tensor({1, 8, 8, 8}, 32, 0.5));
    jitter(e.fragment.params, 33, 0.05);
    e.max_per_tensor = 24;
    cases.push_back(std::move(e));

    auto dec = std::make_shared<vq::Decoder<D>>(cfg);
    dec->init(rng);
    CheckCase d = simple_case("vq_decoder", dec, random_tensor({3, 2, 2, 2}, 34));
    jitter(d.fragment.params, 35, 0.05);
    d.max_per_tensor = 24;
    cases.push_back(std::move(d));

    // Codebook loss as a function of the embeddings with the assignment held fixed.
    auto cb = std::make_shared<vq::Codebook<D>>(4, 3);
    cb->init(rng);
    auto z = std::make_shared<Tensor<D>>(random_tensor({3, 2, 2, 1}, 36));
    Fragment<D> q;
    q.forward = [cb, z](const Tensor<D>&) { return Tensor<D>({1}, {cb->quantize(*z).vq_loss}); };
    q.backward = [cb, z](const Tensor<D>& dy) {
        cb->accumulate_vq_grad(*z, cb->quantize(*z), dy[0]);
        return Tensor<D>({1});
    };
    cb->collect(q.params, "codebook");
    cases.push_back({"vq_codebook_loss", q, Tensor<D>({1}), 1e-3, 0});

    diffusion::UNetConfig ucfg;
    ucfg.in_channels = 3;
    ucfg.channels = {4, 8};
    ucfg.groups = 2;
    ucfg.res_blocks = 1;
    ucfg.mid_attention = true;
    auto unet = std::make_shared<diffusion::UNet<D>>(ucfg);
    unet->init(37);
    Fragment<D> u;
    u.forward = [unet](const Tensor<D>& x) { return unet->forward(x, 137.0); };
    u.backward = [unet](const Tensor<D>& dy) { return unet->backward(dy); };
    u.params = unet->parameters();
    jitter(u.params, 38, 0.05);
    cases.push_back({"unet", u, random_tensor({3, 4, 4, 4}, 39), 1e-3, 12});
    return cases;
}

inline std::vector<CheckCase> all_cases() {
    std::vector<CheckCase> all = layer_cases();
    for (auto& c : block_cases()) all.push_back(std::move(c));
    for (auto& c : model_cases()) all.push_back(std::move(c));
    return all;
}

}  // namespace ldmood::test
