#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "fragments.hpp"
#include "ldmood/error.hpp"
#include "ldmood/scoring/scorer.hpp"

using namespace ldmood;
using namespace ldmood::scoring;

namespace {

Volume constant(Dims d, float v) { return Volume(d, v); }

Volume checkerboard(Dims d) {
    Volume v(d);
    for (std::size_t h = 0; h < d.h; ++h)
        for (std::size_t w = 0; w < d.w; ++w)
            for (std::size_t k = 0; k < d.d; ++k) v.at(h, w, k) = ((h + w + k) % 2) ? 1.0f : 0.0f;
    return v;
}

Volume smooth_blob(Dims d, double ch, double cw, double cd, double r) {
    Volume v(d);
    for (std::size_t h = 0; h < d.h; ++h)
        for (std::size_t w = 0; w < d.w; ++w)
            for (std::size_t k = 0; k < d.d; ++k) {
                const double q = ((h - ch) * (h - ch) + (w - cw) * (w - cw) + (k - cd) * (k - cd)) / (r * r);
                v.at(h, w, k) = static_cast<float>(std::exp(-q));
            }
    return v;
}

ScoringConfig tiny_scoring() {
    ScoringConfig c;
    c.t_values = {0, 100, 200};
    c.anomaly_t_values = {100, 200, 300};
    c.sampler.inference_steps = 10;
    c.ssim.scales = 1;
    c.ssim.window = 5;
    c.seed = 17;
    return c;
}

ModelPair tiny_pair() {
    vq::VQConfig vc = test::tiny_vq_config();
    vc.seed = 3;
    diffusion::UNetConfig uc;
    uc.in_channels = vc.embedding_dim;
    uc.channels = {4, 8};
    uc.groups = 2;
    uc.seed = 4;
    ModelPair p{vq::VQModel<float>(vc), diffusion::DiffusionModel{}};
    p.ddpm.unet = diffusion::UNet<float>(uc);
    p.ddpm.schedule = diffusion::make_scaled_linear_schedule();
    p.ddpm.latent_stats.mean.assign(vc.embedding_dim, 0.0);
    p.ddpm.latent_stats.std.assign(vc.embedding_dim, 1.0);
    return p;
}

constexpr Dims kSmall{16, 16, 16};

VolumeMeasurement fake_measurement(std::vector<double> metrics, Dims d, float fill) {
    return {std::move(metrics), Volume(d, fill)};
}

}  // namespace

// ---- similarity -------------------------------------------------------------

TEST(Similarity, MseExamples) {
    const Dims d{4, 4, 4};
    EXPECT_EQ(mse(constant(d, 0.3f), constant(d, 0.3f)), 0.0);
    EXPECT_DOUBLE_EQ(mse(constant(d, 0.0f), constant(d, 1.0f)), 1.0);
    const Volume a = test::random_volume(d, 1), b = test::random_volume(d, 2);
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
    EXPECT_NEAR(mse(a, b), acc / a.size(), 1e-12);
    EXPECT_DOUBLE_EQ(mse(a, b), mse(b, a));
}

TEST(Similarity, MaeMapIsAbsoluteDifference) {
    const Dims d{3, 4, 5};
    const Volume a = test::random_volume(d, 3), b = test::random_volume(d, 4);
    const Volume m = mae_map(a, b);
    ASSERT_EQ(m.dims(), d);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(m[i], std::fabs(a[i] - b[i]));
}

TEST(Similarity, DimMismatchRejected) {
    EXPECT_THROW(mse(Volume({2, 2, 2}), Volume({2, 2, 3})), ValidationError);
    EXPECT_THROW(mae_map(Volume({2, 2, 2}), Volume({3, 2, 2})), ValidationError);
}

TEST(Similarity, MsSsimOfIdenticalImagesIsOne) {
    const Volume a = test::random_volume({1, 24, 24}, 5);
    EXPECT_NEAR(ms_ssim_2d(a.data().data(), a.data().data(), 24, 24), 1.0, 1e-9);
}

// Pyramid small enough for 12-16 voxel volumes.
const SsimOptions kSmallSsim{2, 1.0, 5};

TEST(Similarity, PerceptualProxyExamples) {
    const Dims d{16, 16, 16};
    const Volume a = smooth_blob(d, 7, 8, 9, 4);
    EXPECT_NEAR(perceptual_proxy(a, a, kSmallSsim), 0.0, 1e-9);
    Volume inv(d);
    const Volume cb = checkerboard(d);
    for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0f - cb[i];
    EXPECT_GT(perceptual_proxy(cb, inv, kSmallSsim), 0.5);
}

TEST(Similarity, PerceptualProxyGrowsWithDistortion) {
    const Dims d{16, 16, 16};
    const Volume a = smooth_blob(d, 8, 8, 8, 4);
    double prev = 0.0;
    for (double s : {0.05, 0.15, 0.4}) {
        Volume b = a;
        const Volume n = test::random_volume(d, 9, -1.0f, 1.0f);
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::clamp(b[i] + static_cast<float>(s) * n[i], 0.0f, 1.0f);
        const double p = perceptual_proxy(a, b, kSmallSsim);
        EXPECT_GT(p, prev);
        prev = p;
    }
}

TEST(Similarity, PerceptualProxyIsFlipInvariant) {
    const Dims d{12, 14, 16};
    const Volume a = smooth_blob(d, 5, 6, 7, 3), b = test::random_volume(d, 11);
    const double base = perceptual_proxy(a, b, kSmallSsim);
    EXPECT_NEAR(perceptual_proxy(b, a, kSmallSsim), base, 1e-9);
    for (int axis = 0; axis < 3; ++axis) EXPECT_NEAR(perceptual_proxy(flip(a, axis), flip(b, axis), kSmallSsim), base, 1e-6);
}

TEST(Similarity, PerceptualProxyClampsInputs) {
    const Dims d{12, 12, 12};
    const Volume a = smooth_blob(d, 6, 6, 6, 3);
    Volume over = a;
    for (std::size_t i = 0; i < over.size(); ++i) over[i] = a[i] > 0.999f ? 5.0f : a[i];
    Volume clamped = over;
    for (auto& x : clamped.data()) x = std::min(x, 1.0f);
    EXPECT_DOUBLE_EQ(perceptual_proxy(a, over, kSmallSsim), perceptual_proxy(a, clamped, kSmallSsim));
}

// ---- config -----------------------------------------------------------------

TEST(ScoringConfig, EvenlySpacedAndPresets) {
    EXPECT_EQ(ScoringConfig::evenly_spaced(4, 1000), (std::vector<std::size_t>{0, 250, 500, 750}));
    const auto desk = ScoringConfig::desk();
    EXPECT_EQ(desk.t_values.size(), 10u);
    EXPECT_EQ(desk.t_values.front(), 0u);
    EXPECT_EQ(desk.t_values.back(), 900u);
    EXPECT_NO_THROW(desk.validate(1000));
    const auto big = ScoringConfig::paper_shape();
    EXPECT_EQ(big.t_values.size(), 50u);
    EXPECT_EQ(big.t_values[1], 20u);
    EXPECT_EQ(big.vector_length(), 100u);
    EXPECT_NO_THROW(big.validate(1000));
    EXPECT_THROW(ScoringConfig::evenly_spaced(0, 1000), ConfigError);
}

TEST(ScoringConfig, ValidationErrors) {
    ScoringConfig c = tiny_scoring();
    EXPECT_NO_THROW(c.validate(1000));
    auto bad = c;
    bad.t_values = {0, 200, 100};
    EXPECT_THROW(bad.validate(1000), ConfigError);
    bad = c;
    bad.t_values = {0, 1000};
    EXPECT_THROW(bad.validate(1000), ConfigError);
    bad = c;
    bad.t_values = {0, 150};  // off the 10-point grid
    EXPECT_THROW(bad.validate(1000), ConfigError);
    bad = c;
    bad.anomaly_t_values = {250};
    EXPECT_THROW(bad.validate(1000), ConfigError);
    bad = c;
    bad.metrics = {Metric::Mse, Metric::Mse};
    EXPECT_THROW(bad.validate(1000), ConfigError);
    bad = c;
    bad.metrics.clear();
    EXPECT_THROW(bad.validate(1000), ConfigError);
    EXPECT_THROW(parse_metric("ssim"), ConfigError);
}

TEST(ScoringConfig, JsonRoundTrip) {
    ScoringConfig c = tiny_scoring();
    c.metrics = {Metric::Perceptual};
    const ScoringConfig back = nlohmann::json(c).get<ScoringConfig>();
    EXPECT_EQ(back.t_values, c.t_values);
    EXPECT_EQ(back.anomaly_t_values, c.anomaly_t_values);
    EXPECT_EQ(back.metrics, c.metrics);
    EXPECT_EQ(back.sampler.inference_steps, 10u);
    EXPECT_EQ(back.ssim.window, 5u);
    EXPECT_EQ(back.seed, 17u);
    EXPECT_EQ(c.reconstruction_t_values(), (std::vector<std::size_t>{0, 100, 200, 300}));
}

// ---- scores and stats -------------------------------------------------------

TEST(OodScore, Examples) {
    ValidationStats s;
    s.metric_mean = {1.0, 2.0, 3.0};
    s.metric_std = {0.5, 1.0, 2.0};
    EXPECT_DOUBLE_EQ(ood_score({1.0, 2.0, 3.0}, s), 0.0);
    EXPECT_DOUBLE_EQ(ood_score({1.5, 3.0, 5.0}, s), 1.0);
    const std::vector<double> x{0.2, 7.0, -1.0};
    EXPECT_NEAR(ood_score(x, s), ((0.2 - 1.0) / 0.5 + (7.0 - 2.0) / 1.0 + (-1.0 - 3.0) / 2.0) / 3.0, 1e-15);
    EXPECT_THROW(ood_score({1.0, 2.0}, s), ValidationError);
}

TEST(ValidationStatsFit, ZScoringOwnVectorsGivesStandardColumns) {
    const ScoringConfig c = tiny_scoring();
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<VolumeMeasurement> ms;
    for (int i = 0; i < 25; ++i) {
        std::vector<double> m;
        for (std::size_t k = 0; k < c.vector_length(); ++k) m.push_back(0.01 * (k + 1) + 0.003 * (k + 1) * n(rng));
        ms.push_back(fake_measurement(m, {2, 2, 2}, static_cast<float>(i)));
    }
    const ValidationStats s = fit_validation_stats(ms, c);
    ASSERT_EQ(s.metric_mean.size(), c.vector_length());
    for (std::size_t k = 0; k < c.vector_length(); ++k) {
        double mean = 0, sq = 0;
        for (const auto& m : ms) mean += (m.metrics[k] - s.metric_mean[k]) / s.metric_std[k];
        mean /= ms.size();
        for (const auto& m : ms) {
            const double z = (m.metrics[k] - s.metric_mean[k]) / s.metric_std[k];
            sq += (z - mean) * (z - mean);
        }
        EXPECT_NEAR(mean, 0.0, 1e-6);
        EXPECT_NEAR(std::sqrt(sq / (ms.size() - 1)), 1.0, 1e-6);
    }
    // voxelwise: fills 0..24 -> mean 12, sample std sqrt(1300 / 24)
    EXPECT_NEAR(s.map_mean[0], 12.0, 1e-5);
    EXPECT_NEAR(s.map_std[7], std::sqrt(1300.0 / 24.0), 1e-5);
    EXPECT_EQ(s.count, 25u);
    EXPECT_EQ(s.t_values, c.t_values);
}

TEST(ValidationStatsFit, StdFloorAndErrors) {
    ScoringConfig c = tiny_scoring();
    c.metrics = {Metric::Mse};
    c.std_floor = 1e-4;
    std::vector<VolumeMeasurement> ms(3, fake_measurement({0.5, 0.5, 0.5}, {2, 2, 2}, 0.25f));
    const ValidationStats s = fit_validation_stats(ms, c);
    for (double sd : s.metric_std) EXPECT_EQ(sd, 1e-4);
    for (float sd : s.map_std.data()) EXPECT_FLOAT_EQ(sd, 1e-4f);
    EXPECT_DOUBLE_EQ(ood_score({0.5, 0.5, 0.5}, s), 0.0);

    EXPECT_THROW(fit_validation_stats({ms.front()}, c), ValidationError);
    auto short_vec = ms;
    short_vec[1].metrics.pop_back();
    EXPECT_THROW(fit_validation_stats(short_vec, c), ValidationError);
    auto other_dims = ms;
    other_dims[2].mean_mae = Volume({2, 2, 3});
    EXPECT_THROW(fit_validation_stats(other_dims, c), ValidationError);
}

TEST(ValidationStatsFit, OrderIndependent) {
    ScoringConfig c = tiny_scoring();
    std::vector<VolumeMeasurement> ms;
    for (int i = 0; i < 9; ++i) {
        std::vector<double> m;
        for (std::size_t k = 0; k < c.vector_length(); ++k) m.push_back(std::sin(0.7 * i + k) * 1e3 + 1e-3 * i);
        ms.push_back({m, test::random_volume({3, 3, 3}, 40 + i)});
    }
    const ValidationStats a = fit_validation_stats(ms, c);
    std::reverse(ms.begin(), ms.end());
    std::swap(ms[1], ms[5]);
    const ValidationStats b = fit_validation_stats(ms, c);
    EXPECT_EQ(a, b);
}

TEST(ValidationStatsFit, SaveLoadRoundTrip) {
    test::TempDir dir("stats");
    const ScoringConfig c = tiny_scoring();
    std::vector<VolumeMeasurement> ms;
    for (int i = 0; i < 4; ++i) {
        std::vector<double> m;
        for (std::size_t k = 0; k < c.vector_length(); ++k) m.push_back(0.1 + 0.0123456789 * i * (k + 1));
        ms.push_back({m, test::random_volume({4, 5, 6}, 60 + i)});
    }
    ValidationStats s = fit_validation_stats(ms, c);
    s.vq_hash = "aa";
    s.ddpm_hash = "bb";
    save_stats(s, dir / "s.nta");
    EXPECT_EQ(load_stats(dir / "s.nta"), s);
    std::ofstream(dir / "junk.nta") << "nope";
    EXPECT_THROW(load_stats(dir / "junk.nta"), DataError);
}

TEST(AnomalyMap, ZScoresVoxelwise) {
    ValidationStats s;
    s.map_mean = Volume({2, 1, 1}, std::vector<float>{0.1f, 0.2f});
    s.map_std = Volume({2, 1, 1}, std::vector<float>{0.05f, 0.1f});
    const Volume m = anomaly_map(Volume({2, 1, 1}, std::vector<float>{0.2f, 0.2f}), s);
    EXPECT_NEAR(m[0], 2.0f, 1e-5f);
    EXPECT_NEAR(m[1], 0.0f, 1e-6f);
    EXPECT_THROW(anomaly_map(Volume({1, 1, 2}), s), ValidationError);
}

TEST(AnomalyMap, SelfReconstructionGivesNegatedMeanOverStd) {
    const Dims d{4, 4, 4};
    const Volume v = test::random_volume(d, 70);
    ValidationStats s;
    s.anomaly_t_values = {100, 200, 300, 400};
    s.map_mean = test::random_volume(d, 71, 0.01f, 0.2f);
    s.map_std = test::random_volume(d, 72, 0.01f, 0.1f);
    std::vector<Reconstruction> recons;
    for (std::size_t t : {0, 100, 200, 300, 400}) recons.push_back({t, v});
    const Volume m = anomaly_map(v, recons, s);
    for (std::size_t i = 0; i < m.size(); ++i) {
        EXPECT_EQ(m[i], static_cast<float>(-static_cast<double>(s.map_mean[i]) / s.map_std[i]));
    }
}

TEST(AnomalyMap, MeanMaeAveragesRequestedTs) {
    const Dims d{2, 2, 2};
    const Volume v(d, 0.5f);
    std::vector<Reconstruction> recons{{100, Volume(d, 0.4f)}, {200, Volume(d, 0.8f)}, {300, Volume(d, 0.0f)}};
    const Volume m = mean_anomaly_mae(v, recons, {100, 200});
    for (float x : m.data()) EXPECT_NEAR(x, 0.2f, 1e-6f);
    EXPECT_THROW(mean_anomaly_mae(v, recons, {400}), ValidationError);
    EXPECT_THROW(mean_anomaly_mae(v, recons, {}), ValidationError);
}

TEST(MetricVector, OrderedByMetricThenT) {
    ScoringConfig c = tiny_scoring();
    const Dims d{8, 8, 8};
    const Volume v = smooth_blob(d, 4, 4, 4, 2);
    std::vector<Reconstruction> recons;
    for (std::size_t t : {0, 100, 200}) {
        Volume r = v;
        for (auto& x : r.data()) x = std::clamp(x + 0.001f * t, 0.0f, 1.0f);
        recons.push_back({t, r});
    }
    const auto m = metric_vector(v, recons, c);
    ASSERT_EQ(m.size(), 6u);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_DOUBLE_EQ(m[k], mse(v, recons[k].volume));
        EXPECT_DOUBLE_EQ(m[3 + k], perceptual_proxy(v, recons[k].volume, c.ssim));
    }
}

// ---- reconstruction with real (untrained) models ------------------------------

TEST(Reconstruct, ShapesDeterminismAndTZero) {
    ModelPair p = tiny_pair();
    const ScoringConfig c = tiny_scoring();
    const Volume v = test::random_volume(kSmall, 80);
    const auto a = reconstruct_multi_t(p, v, c, "vol-1");
    ASSERT_EQ(a.size(), 3u);
    for (const auto& r : a) {
        EXPECT_EQ(r.volume.dims(), kSmall);
        EXPECT_TRUE(r.volume.all_finite());
    }
    EXPECT_EQ(a[0].t, 0u);
    EXPECT_EQ(a[0].volume, p.vq.reconstruct(v));
    const auto b = reconstruct_multi_t(p, v, c, "vol-1");
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].volume, b[i].volume);
    // noise seeding depends on the input id
    const auto other = reconstruct_multi_t(p, v, c, "vol-2", std::vector<std::size_t>{200});
    EXPECT_NE(other[0].volume, a[2].volume);
}

TEST(Reconstruct, IncompatibleModelsRejected) {
    ModelPair p = tiny_pair();
    const ScoringConfig c = tiny_scoring();
    EXPECT_THROW(reconstruct_multi_t(p, test::random_volume({12, 12, 12}, 1), c, "x"), ValidationError);
    p.ddpm.latent_stats.mean.pop_back();
    EXPECT_THROW(p.check_compatible(kSmall), ValidationError);
}

TEST(ScoreDataset, ReportsMapsAndFailures) {
    test::TempDir dir("score");
    ModelPair p = tiny_pair();
    const ScoringConfig c = tiny_scoring();

    DatasetManifest val;
    val.base_dir = dir.path();
    for (int i = 0; i < 4; ++i) {
        const std::string name = "v" + std::to_string(i) + ".vol";
        save_volume(test::random_volume(kSmall, 90 + i), dir / name);
        val.entries.push_back({"val:" + std::to_string(i), name, "id"});
    }
    const auto ms = measure_manifest(p, val, c, 2);
    ASSERT_EQ(ms.size(), 4u);
    const auto single = measure_manifest(p, val, c, 1);
    for (std::size_t i = 0; i < ms.size(); ++i) EXPECT_EQ(ms[i].metrics, single[i].metrics);
    const ValidationStats stats = fit_validation_stats(ms, c);

    DatasetManifest test_set = val;
    test_set.entries.push_back({"missing", "nope.vol", "ood:x"});
    ScoreOptions opt;
    opt.workers = 2;
    opt.map_dir = dir / "maps";
    opt.report_dir = dir.path();
    const auto reports = score_dataset(p, stats, test_set, c, opt);
    ASSERT_EQ(reports.size(), 5u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_FALSE(reports[i].failed);
        EXPECT_EQ(reports[i].metrics, ms[i].metrics);
        EXPECT_NEAR(reports[i].score, ood_score(ms[i].metrics, stats), 1e-12);
        EXPECT_EQ(reports[i].anomaly_map, "maps/val_" + std::to_string(i) + ".vol");
        const Volume m = load_volume(dir / reports[i].anomaly_map);
        EXPECT_EQ(m, anomaly_map(ms[i].mean_mae, stats));
    }
    EXPECT_TRUE(reports[4].failed);
    EXPECT_FALSE(reports[4].error.empty());

    save_reports(reports, dir / "r.jsonl");
    std::ifstream in(dir / "r.jsonl");
    std::string line;
    std::vector<nlohmann::json> lines;
    while (std::getline(in, line)) lines.push_back(nlohmann::json::parse(line));
    ASSERT_EQ(lines.size(), 5u);
    EXPECT_TRUE(lines[4].at("score").is_null());
    EXPECT_TRUE(lines[4].at("failed").get<bool>());
    const auto back = load_reports(dir / "r.jsonl");
    ASSERT_EQ(back.size(), 5u);
    EXPECT_EQ(back[2].id, reports[2].id);
    EXPECT_EQ(back[2].score, reports[2].score);
    EXPECT_EQ(back[2].metrics, reports[2].metrics);
    EXPECT_TRUE(back[4].failed);

    auto wrong = c;
    wrong.t_values = {0, 100};
    EXPECT_THROW(score_dataset(p, stats, test_set, wrong, opt), ValidationError);
}
