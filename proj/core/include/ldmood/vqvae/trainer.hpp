#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ldmood/nn/archive.hpp"
#include "ldmood/vqvae/model.hpp"

namespace ldmood::vq {

struct VQTrainConfig {
    std::size_t max_epochs = 40;
    std::size_t batch_size = 4;
    double learning_rate = 1e-3;
    std::size_t patience = 15;
    bool reseed_dead_codes = true;
    /// Volumes encoded to draw replacement vectors for unused entries.
    std::size_t reseed_sources = 8;
    std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const VQTrainConfig& c);
void from_json(const nlohmann::json& j, VQTrainConfig& c);

struct VQEpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_reconstruction = 0.0;
    double val_reconstruction = 0.0;
    std::size_t codes_used = 0;
    std::size_t codes_reseeded = 0;
};

void to_json(nlohmann::json& j, const VQEpochLog& e);
void from_json(const nlohmann::json& j, VQEpochLog& e);

/// Everything needed to continue training exactly where it stopped.
struct VQTrainState {
    VQModel<float> current;
    VQModel<float> best;
    nn::AdamState<float> adam;
    std::vector<VQEpochLog> log;
    std::size_t epoch = 0;  // completed epochs
    std::size_t best_epoch = 0;
    double best_val = 0.0;
    std::size_t stale_epochs = 0;
    bool finished = false;
    /// Caller-supplied identity of the training inputs, stored in the checkpoint.
    std::string fingerprint;
};

/// Checkpoint layout: "model/" holds the best weights (what inference loads),
/// "train/" the latest weights, "adam.*" the optimizer moments; the footer
/// carries both configs and the training log.
nn::TensorArchive checkpoint_archive(const VQTrainState& state, const VQTrainConfig& train);
void save_checkpoint(const VQTrainState& state, const VQTrainConfig& train, const std::filesystem::path& path);
/// Restores a full training state.
VQTrainState load_train_state(const std::filesystem::path& path, VQTrainConfig* train = nullptr);
/// Loads only the inference model (best weights) from a checkpoint.
VQModel<float> load_model(const std::filesystem::path& path);

using VQProgress = std::function<void(const VQEpochLog&)>;

class VQTrainer {
public:
    VQTrainer(VQConfig model, VQTrainConfig train);

    /// Fresh state, or the checkpoint's state when `checkpoint` exists and `resume` is set.
    VQTrainState start(const std::vector<Volume>& train_set, const std::filesystem::path& checkpoint, bool resume);

    /// One pass over the training set; returns false once training is finished.
    bool run_epoch(VQTrainState& state, const std::vector<Volume>& train_set, const std::vector<Volume>& val_set);

    /// Runs epochs until early stopping or max_epochs, checkpointing after each.
    /// A numerical failure leaves the last good checkpoint in place and rethrows.
    VQTrainState train(const std::vector<Volume>& train_set, const std::vector<Volume>& val_set,
                       const std::filesystem::path& checkpoint, bool resume = true, const VQProgress& progress = {});

    const VQTrainConfig& config() const noexcept { return train_; }
    void set_fingerprint(std::string f) { fingerprint_ = std::move(f); }

private:
    void seed_codebook(VQModel<float>& model, const std::vector<Volume>& train_set, std::uint64_t stream,
                       const std::vector<std::size_t>& entries) const;

    VQConfig model_;
    VQTrainConfig train_;
    std::string fingerprint_;
};

/// Footer of a checkpoint file, parsed; throws DataError if unreadable.
nlohmann::json read_checkpoint_footer(const std::filesystem::path& path);

/// Mean reconstruction MSE over a set of volumes.
double reconstruction_mse(VQModel<float>& model, const std::vector<Volume>& volumes);

}  // namespace ldmood::vq
