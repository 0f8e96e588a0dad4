#include <benchmark/benchmark.h>

#include <random>

#include "ldmood/diffusion/sampler.hpp"
#include "ldmood/diffusion/schedule.hpp"
#include "ldmood/diffusion/unet.hpp"
#include "ldmood/nn/layers.hpp"
#include "ldmood/rng.hpp"
#include "ldmood/scoring/similarity.hpp"
#include "ldmood/synthetic.hpp"
#include "ldmood/vqvae/model.hpp"

using namespace ldmood;
using nn::Tensor;

namespace {

Tensor<float> random_tensor(nn::Shape shape, std::uint64_t seed) {
    return diffusion::gaussian_like<float>(shape, seed);
}

}  // namespace

static void BM_Conv3dForward(benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const auto n = static_cast<std::size_t>(state.range(1));
    nn::Conv3d<float> conv(c, c, 3, 1, 1);
    Rng rng(1);
    conv.init(rng);
    const auto x = random_tensor({c, n, n, n}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * c * 27 * n * n * n));
}
BENCHMARK(BM_Conv3dForward)->Args({16, 16})->Args({32, 16})->Args({16, 32})->Unit(benchmark::kMillisecond);

static void BM_Conv3dBackward(benchmark::State& state) {
    const std::size_t c = 16, n = 16;
    nn::Conv3d<float> conv(c, c, 3, 1, 1);
    Rng rng(1);
    conv.init(rng);
    const auto x = random_tensor({c, n, n, n}, 2);
    const auto dy = random_tensor({c, n, n, n}, 3);
    for (auto _ : state) {
        conv.forward(x);
        benchmark::DoNotOptimize(conv.backward(dy));
    }
}
BENCHMARK(BM_Conv3dBackward)->Unit(benchmark::kMillisecond);

static void BM_UNetForward(benchmark::State& state) {
    diffusion::UNet<float> unet(diffusion::UNetConfig::desk(8));
    const auto z = random_tensor({8, 8, 8, 8}, 4);
    for (auto _ : state) benchmark::DoNotOptimize(unet.forward(z, 500.0));
}
BENCHMARK(BM_UNetForward)->Unit(benchmark::kMillisecond);

static void BM_VQEncodeDecode(benchmark::State& state) {
    vq::VQModel<float> model(vq::VQConfig::desk());
    const Volume v = synth_volume(SyntheticFamily::defaults(FamilyId::HeadLike), 5, Dims{32, 32, 32});
    for (auto _ : state) benchmark::DoNotOptimize(model.reconstruct(v));
}
BENCHMARK(BM_VQEncodeDecode)->Unit(benchmark::kMillisecond);

static void BM_PerceptualProxy(benchmark::State& state) {
    const auto n = static_cast<std::uint32_t>(state.range(0));
    const Volume a = synth_volume(SyntheticFamily::defaults(FamilyId::HeadLike), 6, Dims{n, n, n});
    const Volume b = synth_volume(SyntheticFamily::defaults(FamilyId::HeadLike), 7, Dims{n, n, n});
    for (auto _ : state) benchmark::DoNotOptimize(scoring::perceptual_proxy(a, b));
}
BENCHMARK(BM_PerceptualProxy)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_PlmsReconstruct(benchmark::State& state) {
    diffusion::UNet<float> unet(diffusion::UNetConfig::desk(8));
    const auto schedule = diffusion::make_scaled_linear_schedule();
    const diffusion::EpsModel eps = [&](const Tensor<float>& z, std::size_t t) { return unet.forward(z, static_cast<double>(t)); };
    diffusion::SamplerConfig config;
    config.inference_steps = static_cast<std::size_t>(state.range(0));
    const auto z = random_tensor({8, 8, 8, 8}, 8);
    for (auto _ : state) benchmark::DoNotOptimize(diffusion::plms_reconstruct(schedule, eps, z, 500, config));
}
BENCHMARK(BM_PlmsReconstruct)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
