#include "ldmood/vqvae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ldmood/error.hpp"

namespace ldmood::vq {

void to_json(nlohmann::json& j, const VQTrainConfig& c) {
    j = nlohmann::json{{"max_epochs", c.max_epochs},
                       {"batch_size", c.batch_size},
                       {"learning_rate", c.learning_rate},
                       {"patience", c.patience},
                       {"reseed_dead_codes", c.reseed_dead_codes},
                       {"reseed_sources", c.reseed_sources},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, VQTrainConfig& c) {
    VQTrainConfig d;
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.patience = j.value("patience", d.patience);
    c.reseed_dead_codes = j.value("reseed_dead_codes", d.reseed_dead_codes);
    c.reseed_sources = j.value("reseed_sources", d.reseed_sources);
    c.seed = j.value("seed", d.seed);
}

void to_json(nlohmann::json& j, const VQEpochLog& e) {
    j = nlohmann::json{{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"train_reconstruction", e.train_reconstruction},
                       {"val_reconstruction", e.val_reconstruction},
                       {"codes_used", e.codes_used},
                       {"codes_reseeded", e.codes_reseeded}};
}

void from_json(const nlohmann::json& j, VQEpochLog& e) {
    e.epoch = j.at("epoch").get<std::size_t>();
    e.train_loss = j.at("train_loss").get<double>();
    e.train_reconstruction = j.at("train_reconstruction").get<double>();
    e.val_reconstruction = j.at("val_reconstruction").get<double>();
    e.codes_used = j.at("codes_used").get<std::size_t>();
    e.codes_reseeded = j.at("codes_reseeded").get<std::size_t>();
}

double reconstruction_mse(VQModel<float>& model, const std::vector<Volume>& volumes) {
    if (volumes.empty()) return 0.0;
    double total = 0.0;
    for (const Volume& v : volumes) {
        const Volume r = model.reconstruct(v);
        double sq = 0.0;
        for (std::size_t i = 0; i < v.data().size(); ++i) {
            const double d = static_cast<double>(r.data()[i]) - v.data()[i];
            sq += d * d;
        }
        total += sq / static_cast<double>(v.data().size());
    }
    return total / static_cast<double>(volumes.size());
}

// ---- checkpoints ------------------------------------------------------------

nn::TensorArchive checkpoint_archive(const VQTrainState& state, const VQTrainConfig& train) {
    nn::TensorArchive archive;
    auto best = const_cast<VQModel<float>&>(state.best).parameters();
    auto current = const_cast<VQModel<float>&>(state.current).parameters();
    nn::store_parameters(archive, best, "model/");
    nn::store_parameters(archive, current, "train/");
    nn::store_adam(archive, state.adam);
    nlohmann::json footer{{"kind", "vqvae"},
                          {"config", state.best.config()},
                          {"train", train},
                          {"log", state.log},
                          {"epoch", state.epoch},
                          {"best_epoch", state.best_epoch},
                          {"best_val", state.best_val},
                          {"stale_epochs", state.stale_epochs},
                          {"finished", state.finished},
                          {"fingerprint", state.fingerprint},
                          {"adam_step", state.adam.step}};
    archive.footer = footer.dump();
    return archive;
}

void save_checkpoint(const VQTrainState& state, const VQTrainConfig& train, const std::filesystem::path& path) {
    nn::save_archive(checkpoint_archive(state, train), path);
}

namespace {

nlohmann::json parse_footer(const nn::TensorArchive& archive, const std::filesystem::path& path) {
    nlohmann::json footer = nlohmann::json::parse(archive.footer, nullptr, false);
    if (footer.is_discarded() || footer.value("kind", "") != "vqvae") {
        throw DataError(path.string() + ": not a vqvae checkpoint");
    }
    return footer;
}

}  // namespace

VQTrainState load_train_state(const std::filesystem::path& path, VQTrainConfig* train) {
    const nn::TensorArchive archive = nn::load_archive(path);
    const nlohmann::json footer = parse_footer(archive, path);
    const auto config = footer.at("config").get<VQConfig>();
    VQTrainState s{VQModel<float>(config), VQModel<float>(config), {}, {}, 0, 0, 0.0, 0, false, {}};
    auto best = s.best.parameters();
    auto current = s.current.parameters();
    nn::load_parameters(archive, best, "model/");
    nn::load_parameters(archive, current, "train/");
    nn::load_adam(archive, s.adam, current, footer.at("adam_step").get<std::uint64_t>());
    s.log = footer.at("log").get<std::vector<VQEpochLog>>();
    s.epoch = footer.at("epoch").get<std::size_t>();
    s.best_epoch = footer.at("best_epoch").get<std::size_t>();
    s.best_val = footer.at("best_val").get<double>();
    s.stale_epochs = footer.at("stale_epochs").get<std::size_t>();
    s.finished = footer.at("finished").get<bool>();
    s.fingerprint = footer.value("fingerprint", std::string());
    if (train) *train = footer.at("train").get<VQTrainConfig>();
    return s;
}

nlohmann::json read_checkpoint_footer(const std::filesystem::path& path) {
    const nn::TensorArchive archive = nn::load_archive(path);
    nlohmann::json footer = nlohmann::json::parse(archive.footer, nullptr, false);
    if (footer.is_discarded()) throw DataError(path.string() + ": unreadable checkpoint footer");
    return footer;
}

VQModel<float> load_model(const std::filesystem::path& path) {
    const nn::TensorArchive archive = nn::load_archive(path);
    const nlohmann::json footer = parse_footer(archive, path);
    VQModel<float> model(footer.at("config").get<VQConfig>());
    auto params = model.parameters();
    nn::load_parameters(archive, params, "model/");
    return model;
}

// ---- trainer ----------------------------------------------------------------

VQTrainer::VQTrainer(VQConfig model, VQTrainConfig train) : model_(std::move(model)), train_(train) {
    model_.validate();
    if (train_.batch_size == 0) throw ConfigError("vqvae training: batch_size must be >= 1");
    if (train_.max_epochs == 0) throw ConfigError("vqvae training: max_epochs must be >= 1");
    if (!(train_.learning_rate > 0)) throw ConfigError("vqvae training: learning_rate must be > 0");
}

void VQTrainer::seed_codebook(VQModel<float>& model, const std::vector<Volume>& train_set, std::uint64_t stream,
                              const std::vector<std::size_t>& entries) const {
    if (entries.empty() || train_set.empty()) return;
    Rng rng(derive_seed(train_.seed, 0x5eed, stream));
    std::vector<float> pool;
    const std::size_t n = model_.embedding_dim;
    const std::size_t sources = std::min(std::max<std::size_t>(train_.reseed_sources, 1), train_set.size());
    std::uniform_int_distribution<std::size_t> pick(0, train_set.size() - 1);
    for (std::size_t s = 0; s < sources; ++s) {
        const nn::Tensor<float> z = model.encode(train_set[pick(rng)]);
        const std::size_t positions = nn::spatial_size(z);
        for (std::size_t p = 0; p < positions; ++p)
            for (std::size_t c = 0; c < n; ++c) pool.push_back(z[c * positions + p]);
    }
    const std::size_t vectors = pool.size() / n;
    std::uniform_int_distribution<std::size_t> pick_vec(0, vectors - 1);
    std::vector<float> vec(n);
    for (std::size_t k : entries) {
        const std::size_t v = pick_vec(rng);
        std::copy(pool.begin() + static_cast<std::ptrdiff_t>(v * n), pool.begin() + static_cast<std::ptrdiff_t>((v + 1) * n),
                  vec.begin());
        model.codebook().set_entry(k, vec);
    }
}

VQTrainState VQTrainer::start(const std::vector<Volume>& train_set, const std::filesystem::path& checkpoint,
                              bool resume) {
    if (resume && !checkpoint.empty() && std::filesystem::exists(checkpoint)) {
        VQTrainState s = load_train_state(checkpoint);
        if (nlohmann::json(s.current.config()) != nlohmann::json(model_)) {
            throw ConfigError(checkpoint.string() + ": checkpoint was trained with a different model config");
        }
        return s;
    }
    VQConfig cfg = model_;
    VQTrainState s{VQModel<float>(cfg), VQModel<float>(cfg), {}, {}, 0, 0, 0.0, 0, false, {}};
    // Start the codebook on encoder outputs so every entry begins in the data's range.
    std::vector<std::size_t> all(model_.codebook_size);
    std::iota(all.begin(), all.end(), std::size_t{0});
    seed_codebook(s.current, train_set, 0, all);
    s.best = s.current;
    s.fingerprint = fingerprint_;
    return s;
}

bool VQTrainer::run_epoch(VQTrainState& state, const std::vector<Volume>& train_set, const std::vector<Volume>& val_set) {
    if (state.finished) return false;
    if (train_set.empty()) throw ValidationError("vqvae training: empty training set");
    const std::size_t epoch = state.epoch + 1;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(train_.seed, 0xe90c, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    VQModel<float>& model = state.current;
    auto params = model.parameters();
    nn::Adam<float> adam(nn::AdamConfig{train_.learning_rate});
    adam.state() = std::move(state.adam);
    model.codebook().reset_usage();

    VQEpochLog log;
    log.epoch = epoch;
    for (std::size_t begin = 0; begin < order.size(); begin += train_.batch_size) {
        const std::size_t end = std::min(order.size(), begin + train_.batch_size);
        const double weight = 1.0 / static_cast<double>(end - begin);
        params.zero_grad();
        for (std::size_t i = begin; i < end; ++i) {
            const StepLosses l = model.accumulate_gradients(train_set[order[i]], weight);
            log.train_loss += l.total;
            log.train_reconstruction += l.reconstruction;
        }
        adam.step(params);
    }
    log.train_loss /= static_cast<double>(order.size());
    log.train_reconstruction /= static_cast<double>(order.size());

    const auto& usage = model.codebook().usage();
    std::vector<std::size_t> dead;
    for (std::size_t k = 0; k < usage.size(); ++k)
        if (usage[k] == 0) dead.push_back(k);
    log.codes_used = usage.size() - dead.size();
    if (train_.reseed_dead_codes && !dead.empty()) {
        seed_codebook(model, train_set, epoch, dead);
        adam.reset_rows("codebook.embeddings", dead, model_.embedding_dim);
        log.codes_reseeded = dead.size();
    }
    state.adam = std::move(adam.state());

    log.val_reconstruction = reconstruction_mse(model, val_set.empty() ? train_set : val_set);
    if (!std::isfinite(log.val_reconstruction) || !std::isfinite(log.train_loss)) {
        throw NumericalError("vqvae training diverged at epoch " + std::to_string(epoch));
    }
    state.log.push_back(log);
    state.epoch = epoch;
    if (state.best_epoch == 0 || log.val_reconstruction < state.best_val) {
        state.best = model;
        state.best_val = log.val_reconstruction;
        state.best_epoch = epoch;
        state.stale_epochs = 0;
    } else {
        ++state.stale_epochs;
    }
    if (state.stale_epochs >= train_.patience || state.epoch >= train_.max_epochs) state.finished = true;
    return !state.finished;
}

VQTrainState VQTrainer::train(const std::vector<Volume>& train_set, const std::vector<Volume>& val_set,
                              const std::filesystem::path& checkpoint, bool resume, const VQProgress& progress) {
    VQTrainState state = start(train_set, checkpoint, resume);
    while (!state.finished) {
        VQTrainState next = state;
        run_epoch(next, train_set, val_set);
        state = std::move(next);
        if (!checkpoint.empty()) save_checkpoint(state, train_, checkpoint);
        if (progress) progress(state.log.back());
    }
    return state;
}

}  // namespace ldmood::vq
