#include "ldmood/scoring/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "ldmood/error.hpp"
#include "ldmood/nn/archive.hpp"
#include "ldmood/parallel.hpp"
#include "ldmood/rng.hpp"

namespace ldmood::scoring {

std::string to_string(Metric m) { return m == Metric::Mse ? "mse" : "perceptual"; }

Metric parse_metric(const std::string& name) {
    if (name == "mse") return Metric::Mse;
    if (name == "perceptual") return Metric::Perceptual;
    throw ConfigError("unknown metric '" + name + "' (expected mse or perceptual)");
}

// ---- config -----------------------------------------------------------------

std::vector<std::size_t> ScoringConfig::evenly_spaced(std::size_t n, std::size_t T) {
    if (n == 0 || n > T) throw ConfigError("scoring: need 1 <= N <= T t values");
    std::vector<std::size_t> ts(n);
    for (std::size_t k = 0; k < n; ++k) ts[k] = k * T / n;
    return ts;
}

ScoringConfig ScoringConfig::desk(std::size_t T) {
    ScoringConfig c;
    c.t_values = evenly_spaced(10, T);
    c.sampler.inference_steps = 50;
    return c;
}

ScoringConfig ScoringConfig::paper_shape(std::size_t T) {
    ScoringConfig c;
    c.t_values = evenly_spaced(50, T);
    c.sampler.inference_steps = 100;
    return c;
}

std::vector<std::size_t> ScoringConfig::reconstruction_t_values() const {
    std::set<std::size_t> all(t_values.begin(), t_values.end());
    all.insert(anomaly_t_values.begin(), anomaly_t_values.end());
    return {all.begin(), all.end()};
}

void ScoringConfig::validate(std::size_t T) const {
    if (t_values.empty()) throw ConfigError("scoring: no t values");
    if (metrics.empty()) throw ConfigError("scoring: no metrics enabled");
    for (std::size_t i = 0; i < t_values.size(); ++i) {
        if (t_values[i] >= T) throw ConfigError("scoring: t value " + std::to_string(t_values[i]) + " outside [0, T)");
        if (i > 0 && t_values[i] <= t_values[i - 1]) throw ConfigError("scoring: t values must be strictly increasing");
    }
    if (!(std_floor > 0)) throw ConfigError("scoring: std_floor must be > 0");
    sampler.validate(T);
    if (sampler.kind == diffusion::SamplerKind::Plms) {
        const auto grid = diffusion::inference_grid(T, sampler.inference_steps);
        auto on_grid = [&](std::size_t t) { return std::binary_search(grid.begin(), grid.end(), t); };
        for (std::size_t t : reconstruction_t_values()) {
            if (t >= T) throw ConfigError("scoring: t value " + std::to_string(t) + " outside [0, T)");
            if (!on_grid(t)) {
                throw ConfigError("scoring: t=" + std::to_string(t) + " is not on the " +
                                  std::to_string(sampler.inference_steps) + "-point inference grid");
            }
        }
    }
    for (std::size_t i = 0; i < metrics.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (metrics[i] == metrics[j]) throw ConfigError("scoring: metric listed twice");
}

void to_json(nlohmann::json& j, const ScoringConfig& c) {
    std::vector<std::string> metrics;
    for (Metric m : c.metrics) metrics.push_back(to_string(m));
    j = nlohmann::json{{"t_values", c.t_values},
                       {"anomaly_t_values", c.anomaly_t_values},
                       {"metrics", metrics},
                       {"sampler", c.sampler},
                       {"ssim", {{"scales", c.ssim.scales}, {"sigma", c.ssim.sigma}, {"window", c.ssim.window}}},
                       {"std_floor", c.std_floor},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ScoringConfig& c) {
    ScoringConfig d = ScoringConfig::desk();
    if (j.contains("t_values")) {
        c.t_values = j.at("t_values").get<std::vector<std::size_t>>();
    } else if (j.contains("t_count")) {
        c.t_values = ScoringConfig::evenly_spaced(j.at("t_count").get<std::size_t>(), j.value("T", std::size_t{1000}));
    } else {
        c.t_values = d.t_values;
    }
    c.anomaly_t_values = j.value("anomaly_t_values", d.anomaly_t_values);
    c.metrics.clear();
    for (const auto& m : j.value("metrics", std::vector<std::string>{"mse", "perceptual"})) c.metrics.push_back(parse_metric(m));
    c.sampler = j.contains("sampler") ? j.at("sampler").get<diffusion::SamplerConfig>() : d.sampler;
    c.ssim = d.ssim;
    if (j.contains("ssim")) {
        const auto& s = j.at("ssim");
        c.ssim.scales = s.value("scales", d.ssim.scales);
        c.ssim.sigma = s.value("sigma", d.ssim.sigma);
        c.ssim.window = s.value("window", d.ssim.window);
    }
    c.std_floor = j.value("std_floor", d.std_floor);
    c.seed = j.value("seed", d.seed);
}

// ---- reconstruction ---------------------------------------------------------

void ModelPair::check_compatible(Dims input) const {
    const Dims latent = vq.config().latent_dims(input);
    const auto& u = ddpm.unet.config();
    if (u.in_channels != vq.config().embedding_dim) {
        throw ValidationError("diffusion model expects " + std::to_string(u.in_channels) +
                              "-channel latents but the autoencoder produces " + std::to_string(vq.config().embedding_dim));
    }
    if (ddpm.latent_stats.mean.size() != u.in_channels) throw ValidationError("diffusion latent scaling has wrong length");
    const std::size_t f = std::size_t{1} << (u.levels() - 1);
    if (latent.h % f || latent.w % f || latent.d % f) {
        throw ValidationError("latent grid " + to_string(latent) + " is not divisible by the UNet's " + std::to_string(f) + "x downsampling");
    }
}

std::vector<Reconstruction> reconstruct_multi_t(ModelPair& models, const Volume& v, const ScoringConfig& config,
                                                const std::string& input_id,
                                                std::optional<std::vector<std::size_t>> t_values) {
    models.check_compatible(v.dims());
    const auto ts = t_values ? *t_values : config.t_values;
    const nn::Tensor<float> z0 = models.vq.quantize(models.vq.encode(v)).dequantized;
    const nn::Tensor<float> z0s = models.ddpm.latent_stats.standardize(z0);
    const auto& schedule = models.ddpm.schedule;
    const diffusion::EpsModel eps = models.ddpm.eps_model();
    const std::uint64_t input_stream = hash_string(input_id);

    std::vector<Reconstruction> out;
    out.reserve(ts.size());
    for (std::size_t t : ts) {
        if (t == 0) {
            out.push_back({0, models.vq.decode(z0)});
            continue;
        }
        if (t > schedule.steps) throw ValidationError("reconstruct: t=" + std::to_string(t) + " exceeds T");
        const std::uint64_t seed = derive_seed(config.seed, input_stream, t);
        const auto noise = diffusion::gaussian_like<float>(z0s.shape(), seed);
        const auto zt = diffusion::forward_noise(schedule, z0s, t, noise);
        const auto r = diffusion::reconstruct(schedule, eps, zt, t, config.sampler, derive_seed(seed, 1));
        out.push_back({t, models.vq.decode(models.ddpm.latent_stats.unstandardize(r.z0))});
    }
    return out;
}

namespace {

const Volume& find_recon(const std::vector<Reconstruction>& recons, std::size_t t) {
    for (const auto& r : recons)
        if (r.t == t) return r.volume;
    throw ValidationError("no reconstruction at t=" + std::to_string(t));
}

}  // namespace

std::vector<double> metric_vector(const Volume& v, const std::vector<Reconstruction>& recons, const ScoringConfig& config) {
    std::vector<double> out;
    out.reserve(config.vector_length());
    for (Metric m : config.metrics)
        for (std::size_t t : config.t_values) {
            const Volume& r = find_recon(recons, t);
            out.push_back(m == Metric::Mse ? mse(v, r) : perceptual_proxy(v, r, config.ssim));
        }
    return out;
}

Volume mean_anomaly_mae(const Volume& v, const std::vector<Reconstruction>& recons, const std::vector<std::size_t>& anomaly_t) {
    if (anomaly_t.empty()) throw ValidationError("anomaly map: no t values");
    std::vector<double> acc(v.data().size(), 0.0);
    for (std::size_t t : anomaly_t) {
        const Volume mae = mae_map(v, find_recon(recons, t));
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += mae.data()[i];
    }
    Volume out(v.dims());
    for (std::size_t i = 0; i < acc.size(); ++i) out.data()[i] = static_cast<float>(acc[i] / static_cast<double>(anomaly_t.size()));
    return out;
}

VolumeMeasurement measure(ModelPair& models, const Volume& v, const ScoringConfig& config, const std::string& input_id) {
    const auto recons = reconstruct_multi_t(models, v, config, input_id, config.reconstruction_t_values());
    return {metric_vector(v, recons, config), mean_anomaly_mae(v, recons, config.anomaly_t_values)};
}

// ---- validation statistics ---------------------------------------------------

namespace {

/// Mean and sample std of a column, summed in sorted order so the result does
/// not depend on the order the inputs arrive in.
std::pair<double, double> column_stats(std::vector<double>& values, double floor) {
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / n;
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - mean) * (values[i] - mean);
    std::sort(sq.begin(), sq.end());
    double ss = 0.0;
    for (double v : sq) ss += v;
    return {mean, std::max(std::sqrt(ss / (n - 1.0)), floor)};
}

}  // namespace

ValidationStats fit_validation_stats(const std::vector<VolumeMeasurement>& ms, const ScoringConfig& config) {
    if (ms.size() < 2) throw ValidationError("validation stats need at least 2 volumes, got " + std::to_string(ms.size()));
    const std::size_t len = config.vector_length();
    const Dims dims = ms.front().mean_mae.dims();
    for (const auto& m : ms) {
        if (m.metrics.size() != len) throw ValidationError("metric vector length mismatch in validation set");
        if (m.mean_mae.dims() != dims) throw ValidationError("validation volumes differ in dims");
    }
    ValidationStats s;
    s.count = ms.size();
    s.t_values = config.t_values;
    s.anomaly_t_values = config.anomaly_t_values;
    s.metrics = config.metrics;
    std::vector<double> column(ms.size());
    for (std::size_t k = 0; k < len; ++k) {
        for (std::size_t i = 0; i < ms.size(); ++i) column[i] = ms[i].metrics[k];
        const auto [mean, sd] = column_stats(column, config.std_floor);
        s.metric_mean.push_back(mean);
        s.metric_std.push_back(sd);
    }
    s.map_mean = Volume(dims);
    s.map_std = Volume(dims);
    for (std::size_t v = 0; v < dims.voxels(); ++v) {
        for (std::size_t i = 0; i < ms.size(); ++i) column[i] = ms[i].mean_mae.data()[v];
        const auto [mean, sd] = column_stats(column, config.std_floor);
        s.map_mean.data()[v] = static_cast<float>(mean);
        s.map_std.data()[v] = static_cast<float>(std::max(sd, config.std_floor));
    }
    return s;
}

namespace {

nn::Tensor<float> as_tensor(const std::vector<double>& v) {
    return nn::Tensor<float>({v.size()}, std::vector<float>(v.begin(), v.end()));
}

nn::Tensor<float> as_tensor(const Volume& v) {
    const Dims d = v.dims();
    return nn::Tensor<float>({d.h, d.w, d.d}, std::vector<float>(v.data().begin(), v.data().end()));
}

Volume as_volume(const nn::Tensor<float>& t) {
    if (t.rank() != 3) throw DataError("stats: map entry must be rank 3");
    return Volume(Dims{static_cast<std::uint32_t>(t.extent(0)), static_cast<std::uint32_t>(t.extent(1)),
                       static_cast<std::uint32_t>(t.extent(2))},
                  std::vector<float>(t.values().begin(), t.values().end()));
}

}  // namespace

void save_stats(const ValidationStats& s, const std::filesystem::path& path) {
    nn::TensorArchive a;
    // Metric stats are kept exactly in the footer; the float tensors are for inspection.
    a.add("metric.mean", as_tensor(s.metric_mean));
    a.add("metric.std", as_tensor(s.metric_std));
    a.add("map.mean", as_tensor(s.map_mean));
    a.add("map.std", as_tensor(s.map_std));
    std::vector<std::string> metrics;
    for (Metric m : s.metrics) metrics.push_back(to_string(m));
    a.footer = nlohmann::json{{"kind", "validation-stats"},
                              {"metric_mean", s.metric_mean},
                              {"metric_std", s.metric_std},
                              {"t_values", s.t_values},
                              {"anomaly_t_values", s.anomaly_t_values},
                              {"metrics", metrics},
                              {"count", s.count},
                              {"vq_sha256", s.vq_hash},
                              {"ddpm_sha256", s.ddpm_hash}}
                   .dump();
    nn::save_archive(a, path);
}

ValidationStats load_stats(const std::filesystem::path& path) {
    const nn::TensorArchive a = nn::load_archive(path);
    const nlohmann::json f = nlohmann::json::parse(a.footer, nullptr, false);
    if (f.is_discarded() || f.value("kind", "") != "validation-stats") throw DataError(path.string() + ": not a stats file");
    ValidationStats s;
    s.metric_mean = f.at("metric_mean").get<std::vector<double>>();
    s.metric_std = f.at("metric_std").get<std::vector<double>>();
    s.t_values = f.at("t_values").get<std::vector<std::size_t>>();
    s.anomaly_t_values = f.at("anomaly_t_values").get<std::vector<std::size_t>>();
    for (const auto& m : f.at("metrics").get<std::vector<std::string>>()) s.metrics.push_back(parse_metric(m));
    s.count = f.at("count").get<std::size_t>();
    s.vq_hash = f.at("vq_sha256").get<std::string>();
    s.ddpm_hash = f.at("ddpm_sha256").get<std::string>();
    s.map_mean = as_volume(a.at("map.mean"));
    s.map_std = as_volume(a.at("map.std"));
    if (s.metric_mean.size() != s.metric_std.size() || s.metric_mean.size() != s.metrics.size() * s.t_values.size()) {
        throw DataError(path.string() + ": inconsistent metric statistics");
    }
    if (s.map_mean.dims() != s.map_std.dims()) throw DataError(path.string() + ": map mean/std dims differ");
    return s;
}

double ood_score(const std::vector<double>& metrics, const ValidationStats& stats) {
    if (metrics.size() != stats.metric_mean.size()) {
        throw ValidationError("ood_score: metric vector has " + std::to_string(metrics.size()) + " entries, stats have " +
                              std::to_string(stats.metric_mean.size()));
    }
    if (metrics.empty()) throw ValidationError("ood_score: empty metric vector");
    double acc = 0.0;
    for (std::size_t i = 0; i < metrics.size(); ++i) acc += (metrics[i] - stats.metric_mean[i]) / stats.metric_std[i];
    return acc / static_cast<double>(metrics.size());
}

Volume anomaly_map(const Volume& mean_mae, const ValidationStats& stats) {
    if (mean_mae.dims() != stats.map_mean.dims()) {
        throw ValidationError("anomaly map: input dims " + to_string(mean_mae.dims()) + " vs stats " + to_string(stats.map_mean.dims()));
    }
    Volume out(mean_mae.dims());
    for (std::size_t i = 0; i < out.data().size(); ++i) {
        out.data()[i] = static_cast<float>((static_cast<double>(mean_mae.data()[i]) - stats.map_mean.data()[i]) / stats.map_std.data()[i]);
    }
    return out;
}

Volume anomaly_map(const Volume& v, const std::vector<Reconstruction>& recons, const ValidationStats& stats) {
    return anomaly_map(mean_anomaly_mae(v, recons, stats.anomaly_t_values), stats);
}

// ---- reports ----------------------------------------------------------------

void to_json(nlohmann::json& j, const OODScoreReport& r) {
    j = nlohmann::json{{"id", r.id}, {"label", r.label}, {"metrics", r.metrics}, {"score", r.score}, {"anomaly_map", r.anomaly_map}};
    if (r.failed) {
        j["failed"] = true;
        j["error"] = r.error;
        j["score"] = nullptr;
    }
}

void from_json(const nlohmann::json& j, OODScoreReport& r) {
    r.id = j.at("id").get<std::string>();
    r.label = j.at("label").get<std::string>();
    r.metrics = j.at("metrics").get<std::vector<double>>();
    r.failed = j.value("failed", false);
    r.error = j.value("error", std::string());
    r.score = j.at("score").is_null() ? 0.0 : j.at("score").get<double>();
    r.anomaly_map = j.value("anomaly_map", std::string());
}

void save_reports(const std::vector<OODScoreReport>& reports, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + path.string());
        for (const auto& r : reports) out << nlohmann::json(r).dump() << '\n';
        if (!out) throw DataError("write failed: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<OODScoreReport> load_reports(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::vector<OODScoreReport> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw DataError(path.string() + ":" + std::to_string(n) + ": malformed record");
        out.push_back(j.get<OODScoreReport>());
    }
    return out;
}

// ---- batch driver -----------------------------------------------------------

std::vector<VolumeMeasurement> measure_manifest(const ModelPair& models, const DatasetManifest& manifest,
                                                const ScoringConfig& config, std::size_t workers) {
    config.validate(models.ddpm.schedule.steps);
    std::vector<VolumeMeasurement> out(manifest.size());
    std::vector<ModelPair> copies(std::max<std::size_t>(1, std::min(workers, manifest.size())), models);
    parallel_for(manifest.size(), copies.size(), [&](std::size_t w, std::size_t i) {
        const auto& e = manifest.entries[i];
        out[i] = measure(copies[w], load_volume(manifest.resolve(e)), config, e.id);
    });
    return out;
}

std::vector<OODScoreReport> score_dataset(const ModelPair& models, const ValidationStats& stats,
                                          const DatasetManifest& manifest, const ScoringConfig& config,
                                          const ScoreOptions& options) {
    config.validate(models.ddpm.schedule.steps);
    if (stats.t_values != config.t_values || stats.metrics != config.metrics || stats.anomaly_t_values != config.anomaly_t_values) {
        throw ValidationError("stats were fitted with a different scoring configuration");
    }
    if (options.map_dir) std::filesystem::create_directories(*options.map_dir);
    std::vector<OODScoreReport> reports(manifest.size());
    std::vector<ModelPair> copies(std::max<std::size_t>(1, std::min(options.workers, manifest.size())), models);
    parallel_for(manifest.size(), copies.size(), [&](std::size_t w, std::size_t i) {
        const auto& e = manifest.entries[i];
        OODScoreReport& r = reports[i];
        r.id = e.id;
        r.label = e.label;
        try {
            const VolumeMeasurement m = measure(copies[w], load_volume(manifest.resolve(e)), config, e.id);
            r.metrics = m.metrics;
            r.score = ood_score(m.metrics, stats);
            if (!std::isfinite(r.score)) throw NumericalError("non-finite score");
            if (options.map_dir) {
                std::string name = e.id;
                std::replace(name.begin(), name.end(), ':', '_');
                const auto path = *options.map_dir / (name + ".vol");
                save_volume(anomaly_map(m.mean_mae, stats), path);
                r.anomaly_map = std::filesystem::relative(path, options.report_dir.empty() ? std::filesystem::current_path()
                                                                                           : options.report_dir)
                                    .generic_string();
            }
        } catch (const std::exception& ex) {
            r.failed = true;
            r.error = ex.what();
            r.metrics.clear();
            r.score = 0.0;
        }
    });
    return reports;
}

}  // namespace ldmood::scoring
