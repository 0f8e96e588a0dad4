#include "ldmood/diffusion/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "ldmood/error.hpp"
#include "ldmood/nn/functional.hpp"
#include "ldmood/rng.hpp"

namespace ldmood::diffusion {

// ---- latent scaling ---------------------------------------------------------

LatentStats LatentStats::fit(const std::vector<nn::Tensor<float>>& latents) {
    if (latents.empty()) throw ValidationError("latent stats: no latents");
    const std::size_t C = latents.front().extent(0);
    std::vector<double> sum(C, 0.0), sq(C, 0.0);
    std::size_t count = 0;
    for (const auto& z : latents) {
        if (z.shape() != latents.front().shape()) throw ValidationError("latent stats: latents differ in shape");
        const std::size_t plane = nn::spatial_size(z);
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
                const double v = z[c * plane + i];
                sum[c] += v;
                sq[c] += v * v;
            }
        count += plane;
    }
    LatentStats s;
    s.mean.resize(C);
    s.std.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        s.mean[c] = sum[c] / static_cast<double>(count);
        const double var = sq[c] / static_cast<double>(count) - s.mean[c] * s.mean[c];
        s.std[c] = std::max(std::sqrt(std::max(var, 0.0)), 1e-6);
    }
    return s;
}

nn::Tensor<float> LatentStats::standardize(const nn::Tensor<float>& z) const {
    if (z.rank() == 0 || z.extent(0) != mean.size()) throw ValidationError("latent stats: channel mismatch");
    nn::Tensor<float> out(z.shape());
    const std::size_t plane = nn::spatial_size(z);
    for (std::size_t c = 0; c < mean.size(); ++c)
        for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = static_cast<float>((z[c * plane + i] - mean[c]) / std[c]);
    return out;
}

nn::Tensor<float> LatentStats::unstandardize(const nn::Tensor<float>& z) const {
    if (z.rank() == 0 || z.extent(0) != mean.size()) throw ValidationError("latent stats: channel mismatch");
    nn::Tensor<float> out(z.shape());
    const std::size_t plane = nn::spatial_size(z);
    for (std::size_t c = 0; c < mean.size(); ++c)
        for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = static_cast<float>(z[c * plane + i] * std[c] + mean[c]);
    return out;
}

void to_json(nlohmann::json& j, const LatentStats& s) { j = nlohmann::json{{"mean", s.mean}, {"std", s.std}}; }

void from_json(const nlohmann::json& j, LatentStats& s) {
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
    if (s.mean.size() != s.std.size()) throw DataError("latent stats: mean/std length mismatch");
}

EpsModel DiffusionModel::eps_model() {
    return [this](const nn::Tensor<float>& z, std::size_t t) { return unet.forward(z, static_cast<double>(t)); };
}

// ---- configs and logs -------------------------------------------------------

void to_json(nlohmann::json& j, const DDPMTrainConfig& c) {
    j = nlohmann::json{{"max_epochs", c.max_epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
                       {"patience", c.patience},     {"val_draws", c.val_draws},   {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DDPMTrainConfig& c) {
    DDPMTrainConfig d;
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.patience = j.value("patience", d.patience);
    c.val_draws = j.value("val_draws", d.val_draws);
    c.seed = j.value("seed", d.seed);
}

void to_json(nlohmann::json& j, const DDPMEpochLog& e) {
    j = nlohmann::json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}};
}

void from_json(const nlohmann::json& j, DDPMEpochLog& e) {
    e.epoch = j.at("epoch").get<std::size_t>();
    e.train_loss = j.at("train_loss").get<double>();
    e.val_loss = j.at("val_loss").get<double>();
}

// ---- checkpoints ------------------------------------------------------------

void save_checkpoint(const DDPMTrainState& state, const DDPMTrainConfig& train, const std::filesystem::path& path) {
    nn::TensorArchive archive;
    auto best = const_cast<UNet<float>&>(state.best.unet).parameters();
    auto current = const_cast<UNet<float>&>(state.current.unet).parameters();
    nn::store_parameters(archive, best, "model/");
    nn::store_parameters(archive, current, "train/");
    nn::store_adam(archive, state.adam);
    nlohmann::json footer{{"kind", "ddpm"},
                          {"unet", state.best.unet.config()},
                          {"schedule", state.best.schedule},
                          {"latent_stats", state.best.latent_stats},
                          {"train", train},
                          {"log", state.log},
                          {"epoch", state.epoch},
                          {"best_epoch", state.best_epoch},
                          {"best_val", state.best_val},
                          {"initial_val", state.initial_val},
                          {"stale_epochs", state.stale_epochs},
                          {"finished", state.finished},
                          {"fingerprint", state.fingerprint},
                          {"adam_step", state.adam.step}};
    archive.footer = footer.dump();
    nn::save_archive(archive, path);
}

namespace {

nlohmann::json parse_footer(const nn::TensorArchive& archive, const std::filesystem::path& path) {
    nlohmann::json footer = nlohmann::json::parse(archive.footer, nullptr, false);
    if (footer.is_discarded() || footer.value("kind", "") != "ddpm") {
        throw DataError(path.string() + ": not a diffusion checkpoint");
    }
    return footer;
}

DiffusionModel model_from_footer(const nlohmann::json& footer) {
    return DiffusionModel{UNet<float>(footer.at("unet").get<UNetConfig>()), footer.at("schedule").get<NoiseSchedule>(),
                          footer.at("latent_stats").get<LatentStats>()};
}

}  // namespace

DDPMTrainState load_train_state(const std::filesystem::path& path, DDPMTrainConfig* train) {
    const nn::TensorArchive archive = nn::load_archive(path);
    const nlohmann::json footer = parse_footer(archive, path);
    DDPMTrainState s{model_from_footer(footer), model_from_footer(footer), {}, {}, 0, 0, 0.0, 0.0, 0, false, {}};
    auto best = s.best.unet.parameters();
    auto current = s.current.unet.parameters();
    nn::load_parameters(archive, best, "model/");
    nn::load_parameters(archive, current, "train/");
    nn::load_adam(archive, s.adam, current, footer.at("adam_step").get<std::uint64_t>());
    s.log = footer.at("log").get<std::vector<DDPMEpochLog>>();
    s.epoch = footer.at("epoch").get<std::size_t>();
    s.best_epoch = footer.at("best_epoch").get<std::size_t>();
    s.best_val = footer.at("best_val").get<double>();
    s.initial_val = footer.at("initial_val").get<double>();
    s.stale_epochs = footer.at("stale_epochs").get<std::size_t>();
    s.finished = footer.at("finished").get<bool>();
    s.fingerprint = footer.value("fingerprint", std::string());
    if (train) *train = footer.at("train").get<DDPMTrainConfig>();
    return s;
}

DiffusionModel load_model(const std::filesystem::path& path) {
    const nn::TensorArchive archive = nn::load_archive(path);
    DiffusionModel m = model_from_footer(parse_footer(archive, path));
    auto params = m.unet.parameters();
    nn::load_parameters(archive, params, "model/");
    return m;
}

// ---- training ---------------------------------------------------------------

namespace {

std::size_t draw_t(Rng& rng, std::size_t T) { return std::uniform_int_distribution<std::size_t>(1, T)(rng); }

}  // namespace

double validation_loss(DiffusionModel& model, const std::vector<nn::Tensor<float>>& latents, std::size_t draws,
                       std::uint64_t seed) {
    if (latents.empty() || draws == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < latents.size(); ++i) {
        for (std::size_t k = 0; k < draws; ++k) {
            const std::uint64_t s = derive_seed(seed, 0x7a1, i, k);
            Rng rng(s);
            const std::size_t t = draw_t(rng, model.schedule.steps);
            const auto eps = gaussian_like<float>(latents[i].shape(), derive_seed(s, 1));
            const auto zt = forward_noise(model.schedule, latents[i], t, eps);
            total += nn::mean_squared_error(model.unet.forward(zt, static_cast<double>(t)), eps);
        }
    }
    return total / static_cast<double>(latents.size() * draws);
}

DDPMTrainer::DDPMTrainer(UNetConfig unet, NoiseSchedule schedule, DDPMTrainConfig train)
    : unet_(std::move(unet)), schedule_(std::move(schedule)), train_(train) {
    unet_.validate();
    if (train_.batch_size == 0) throw ConfigError("ddpm training: batch_size must be >= 1");
    if (train_.max_epochs == 0) throw ConfigError("ddpm training: max_epochs must be >= 1");
    if (!(train_.learning_rate > 0)) throw ConfigError("ddpm training: learning_rate must be > 0");
}

namespace {

std::vector<nn::Tensor<float>> standardize_all(const LatentStats& s, const std::vector<nn::Tensor<float>>& zs) {
    std::vector<nn::Tensor<float>> out;
    out.reserve(zs.size());
    for (const auto& z : zs) out.push_back(s.standardize(z));
    return out;
}

}  // namespace

DDPMTrainState DDPMTrainer::start(const std::vector<nn::Tensor<float>>& train_latents,
                                  const std::vector<nn::Tensor<float>>& val_latents,
                                  const std::filesystem::path& checkpoint, bool resume) {
    if (resume && !checkpoint.empty() && std::filesystem::exists(checkpoint)) {
        DDPMTrainState s = load_train_state(checkpoint);
        if (nlohmann::json(s.current.unet.config()) != nlohmann::json(unet_)) {
            throw ConfigError(checkpoint.string() + ": checkpoint was trained with a different UNet config");
        }
        return s;
    }
    if (train_latents.empty()) throw ValidationError("ddpm training: no training latents");
    DiffusionModel m{UNet<float>(unet_), schedule_, LatentStats::fit(train_latents)};
    DDPMTrainState s{m, m, {}, {}, 0, 0, 0.0, 0.0, 0, false, fingerprint_};
    const auto& val = val_latents.empty() ? train_latents : val_latents;
    s.initial_val = validation_loss(s.current, standardize_all(m.latent_stats, val), train_.val_draws, train_.seed);
    return s;
}

bool DDPMTrainer::run_epoch(DDPMTrainState& state, const std::vector<nn::Tensor<float>>& train_latents,
                            const std::vector<nn::Tensor<float>>& val_latents) {
    if (state.finished) return false;
    if (train_latents.empty()) throw ValidationError("ddpm training: no training latents");
    const std::size_t epoch = state.epoch + 1;
    DiffusionModel& model = state.current;
    const auto data = standardize_all(model.latent_stats, train_latents);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(train_.seed, 0xd1ff, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    auto params = model.unet.parameters();
    nn::Adam<float> adam(nn::AdamConfig{train_.learning_rate});
    adam.state() = std::move(state.adam);

    DDPMEpochLog log;
    log.epoch = epoch;
    for (std::size_t begin = 0; begin < order.size(); begin += train_.batch_size) {
        const std::size_t end = std::min(order.size(), begin + train_.batch_size);
        const double weight = 1.0 / static_cast<double>(end - begin);
        params.zero_grad();
        for (std::size_t i = begin; i < end; ++i) {
            const nn::Tensor<float>& z0 = data[order[i]];
            const std::size_t t = draw_t(rng, schedule_.steps);
            const auto eps = gaussian_like<float>(z0.shape(), rng());
            const auto zt = forward_noise(model.schedule, z0, t, eps);
            const auto pred = model.unet.forward(zt, static_cast<double>(t));
            nn::Tensor<float> grad(pred.shape());
            double sq = 0.0;
            const double n = static_cast<double>(pred.size());
            for (std::size_t k = 0; k < pred.size(); ++k) {
                const double d = static_cast<double>(pred[k]) - eps[k];
                sq += d * d;
                grad[k] = static_cast<float>(2.0 * weight * d / n);
            }
            log.train_loss += sq / n;
            model.unet.backward(grad);
        }
        adam.step(params);
    }
    state.adam = std::move(adam.state());
    log.train_loss /= static_cast<double>(order.size());

    const auto& val = val_latents.empty() ? train_latents : val_latents;
    log.val_loss = validation_loss(model, standardize_all(model.latent_stats, val), train_.val_draws, train_.seed);
    if (!std::isfinite(log.val_loss) || !std::isfinite(log.train_loss)) {
        throw NumericalError("ddpm training diverged at epoch " + std::to_string(epoch));
    }
    state.log.push_back(log);
    state.epoch = epoch;
    if (state.best_epoch == 0 || log.val_loss < state.best_val) {
        state.best = model;
        state.best_val = log.val_loss;
        state.best_epoch = epoch;
        state.stale_epochs = 0;
    } else {
        ++state.stale_epochs;
    }
    if (state.stale_epochs >= train_.patience || state.epoch >= train_.max_epochs) state.finished = true;
    return !state.finished;
}

DDPMTrainState DDPMTrainer::train(const std::vector<nn::Tensor<float>>& train_latents,
                                  const std::vector<nn::Tensor<float>>& val_latents,
                                  const std::filesystem::path& checkpoint, bool resume, const DDPMProgress& progress) {
    DDPMTrainState state = start(train_latents, val_latents, checkpoint, resume);
    while (!state.finished) {
        DDPMTrainState next = state;
        run_epoch(next, train_latents, val_latents);
        state = std::move(next);
        if (!checkpoint.empty()) save_checkpoint(state, train_, checkpoint);
        if (progress) progress(state.log.back());
    }
    return state;
}

}  // namespace ldmood::diffusion
