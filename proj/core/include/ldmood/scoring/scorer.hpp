#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ldmood/dataset.hpp"
#include "ldmood/diffusion/sampler.hpp"
#include "ldmood/diffusion/trainer.hpp"
#include "ldmood/scoring/similarity.hpp"
#include "ldmood/volume.hpp"
#include "ldmood/vqvae/model.hpp"

namespace ldmood::scoring {

enum class Metric { Mse, Perceptual };

std::string to_string(Metric m);
Metric parse_metric(const std::string& name);

struct ScoringConfig {
    std::vector<std::size_t> t_values;
    std::vector<std::size_t> anomaly_t_values{100, 200, 300, 400};
    std::vector<Metric> metrics{Metric::Mse, Metric::Perceptual};
    diffusion::SamplerConfig sampler;
    SsimOptions ssim;
    double std_floor = 1e-8;
    std::uint64_t seed = 0;

    /// Throws ConfigError unless t values are strictly increasing in [0, T) and
    /// every nonzero t (scored or anomaly) lies on the sampler's inference grid.
    void validate(std::size_t T) const;
    /// Length of a metric vector: metrics x t values.
    std::size_t vector_length() const noexcept { return metrics.size() * t_values.size(); }
    /// Scored t values plus any anomaly t values not among them, ascending.
    std::vector<std::size_t> reconstruction_t_values() const;

    /// N values k * T / N, k = 0..N-1.
    static std::vector<std::size_t> evenly_spaced(std::size_t n, std::size_t T);
    /// 10 t values and a 50-point grid, sized for a single CPU core.
    static ScoringConfig desk(std::size_t T = 1000);
    /// 50 t values over [0, T) and a 100-point grid.
    static ScoringConfig paper_shape(std::size_t T = 1000);
};

void to_json(nlohmann::json& j, const ScoringConfig& c);
void from_json(const nlohmann::json& j, ScoringConfig& c);

/// A first-stage model and a diffusion model over its latents. Inference
/// mutates activation caches, so each thread needs its own copy.
struct ModelPair {
    vq::VQModel<float> vq;
    diffusion::DiffusionModel ddpm;

    /// Throws ValidationError if the diffusion model does not match the latent shape.
    void check_compatible(Dims input) const;
};

struct Reconstruction {
    std::size_t t = 0;
    Volume volume;
};

/// One reconstruction per requested t. t = 0 is the plain autoencoder round
/// trip; otherwise noise is seeded by (config.seed, input id, t).
std::vector<Reconstruction> reconstruct_multi_t(ModelPair& models, const Volume& v, const ScoringConfig& config,
                                                const std::string& input_id,
                                                std::optional<std::vector<std::size_t>> t_values = std::nullopt);

/// Per-input measurements: metric vector ordered (metric, t) and the MAE map
/// averaged over the anomaly t values.
struct VolumeMeasurement {
    std::vector<double> metrics;
    Volume mean_mae;
};

VolumeMeasurement measure(ModelPair& models, const Volume& v, const ScoringConfig& config, const std::string& input_id);

/// Metric vector from reconstructions (must cover config.t_values).
std::vector<double> metric_vector(const Volume& v, const std::vector<Reconstruction>& recons, const ScoringConfig& config);
/// Mean of the MAE maps at the anomaly t values (all must be present).
Volume mean_anomaly_mae(const Volume& v, const std::vector<Reconstruction>& recons, const std::vector<std::size_t>& anomaly_t);

struct ValidationStats {
    std::vector<double> metric_mean, metric_std;
    Volume map_mean, map_std;
    std::vector<std::size_t> t_values, anomaly_t_values;
    std::vector<Metric> metrics;
    std::size_t count = 0;
    std::string vq_hash, ddpm_hash;  // SHA-256 of the checkpoints the stats were fitted with

    friend bool operator==(const ValidationStats&, const ValidationStats&) = default;
};

/// Columnwise mean/std (sample std, n - 1) and voxelwise map mean/std, summed
/// in input order. Requires at least two measurements.
ValidationStats fit_validation_stats(const std::vector<VolumeMeasurement>& measurements, const ScoringConfig& config);

void save_stats(const ValidationStats& stats, const std::filesystem::path& path);
ValidationStats load_stats(const std::filesystem::path& path);

/// Mean over entries of (value - mean) / std.
double ood_score(const std::vector<double>& metrics, const ValidationStats& stats);
/// (mean MAE - map mean) / map std, voxelwise.
Volume anomaly_map(const Volume& mean_mae, const ValidationStats& stats);
/// Convenience: MAE maps from reconstructions, averaged, then z-scored.
Volume anomaly_map(const Volume& v, const std::vector<Reconstruction>& recons, const ValidationStats& stats);

struct OODScoreReport {
    std::string id;
    std::string label;
    std::vector<double> metrics;
    double score = 0.0;
    std::string anomaly_map;  // relative path, empty if none written
    bool failed = false;
    std::string error;
};

void to_json(nlohmann::json& j, const OODScoreReport& r);
void from_json(const nlohmann::json& j, OODScoreReport& r);

/// One JSON record per line.
void save_reports(const std::vector<OODScoreReport>& reports, const std::filesystem::path& path);
std::vector<OODScoreReport> load_reports(const std::filesystem::path& path);

struct ScoreOptions {
    std::size_t workers = 1;
    /// When set, anomaly maps are written here as <id>.vol.
    std::optional<std::filesystem::path> map_dir;
    /// Anomaly-map paths in reports are stored relative to this directory.
    std::filesystem::path report_dir;
};

/// Measurements for every manifest entry, index-aligned with it. Load or
/// compute failures throw.
std::vector<VolumeMeasurement> measure_manifest(const ModelPair& models, const DatasetManifest& manifest,
                                                const ScoringConfig& config, std::size_t workers);

/// One report per manifest entry. A failing entry is kept and flagged.
std::vector<OODScoreReport> score_dataset(const ModelPair& models, const ValidationStats& stats,
                                          const DatasetManifest& manifest, const ScoringConfig& config,
                                          const ScoreOptions& options = {});

}  // namespace ldmood::scoring
