#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "brushtrace/augment.h"
#include "brushtrace/checkpoint.h"
#include "brushtrace/model.h"
#include "brushtrace/patches.h"

namespace brushtrace {

// Per-class scaling factors (blank, human, robot).
inline constexpr std::array<double, 3> kDefaultAlphas{0.01, 1.0, 0.75};

struct ClassWeights {
    std::array<double, 3> weights{};
    std::array<double, 3> alphas{};
    std::array<std::size_t, 3> counts{};

    double operator[](ClassLabel c) const { return weights[static_cast<std::size_t>(index_of(c))]; }
};

// w_c = alpha_c * (N_total / N_c), N_total = sum of the three counts.
// Any zero count or non-positive alpha is a ConfigError.
ClassWeights compute_class_weights(std::array<std::size_t, 3> counts, std::array<double, 3> alphas = kDefaultAlphas);

// Per-fold variant: classes present in the split follow the same formula; an
// absent class gets weight alpha_c, which never enters the loss because no
// target carries it. Throws ConfigError when the split is empty.
ClassWeights fold_class_weights(std::array<std::size_t, 3> counts, std::array<double, 3> alphas = kDefaultAlphas);

struct TrainConfig {
    double lr = 1e-4;
    double momentum = 0.9;
    int batch_size = 64;
    int epochs = 100;
    std::uint64_t seed = 0;
    AugmentationConfig augmentation;
    bool augment = true;
    int eval_every = 1;
    std::array<double, 3> alphas = kDefaultAlphas;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// Seeded permutation of [0, n) for the given epoch, cut into consecutive
// batches; the final short batch is kept.
std::vector<std::vector<std::size_t>> epoch_schedule(std::size_t n, std::size_t batch_size, std::uint64_t seed, int epoch);

struct Checkpoint {
    std::vector<NamedTensor> parameters;  // rounded to single precision
    int epoch = 0;
    double val_accuracy = 0.0;
    int fold_id = -1;
};

struct EpochRecord {
    int fold = -1;
    int epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_accuracy;
};

nlohmann::json to_json(const EpochRecord& r);

// Index of the record with maximal val_accuracy, earliest on ties.
std::optional<std::size_t> select_best_epoch(std::span<const EpochRecord> history);

struct TrainResult {
    Checkpoint best;
    std::vector<EpochRecord> history;
    std::optional<double> final_val_accuracy;
    int final_epoch = 0;
    ClassWeights weights;
    Checkpoint final_state;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains one fold. Held-out patches are evaluated unaugmented after every
// eval interval and the best-accuracy checkpoint (earliest epoch on ties) is
// returned. Class weights come from the training split only.
// Throws LeakageError when the splits share a painting ID, UsageError on an
// empty held-out set, DivergenceError on a non-finite loss.
TrainResult train_fold(std::span<const PatchRecord> train, std::span<const PatchRecord> heldout,
                       const ModelConfig& model_config, const TrainConfig& train_config, int fold_id = -1,
                       const EpochCallback& on_epoch = {});

// Lower-level loop with explicit per-class weights. `heldout` may be empty,
// in which case `best` is the final epoch.
TrainResult train_with_weights(std::span<const PatchRecord> train, std::span<const PatchRecord> heldout,
                               const ModelConfig& model_config, const TrainConfig& train_config,
                               const std::array<double, 3>& class_weights, int fold_id, const EpochCallback& on_epoch);

void check_disjoint_paintings(std::span<const PatchRecord> train, std::span<const PatchRecord> heldout);

// Resizes a patch to the network input size and packs a [N,1,S,S] batch.
Tensor make_batch(std::span<const std::vector<float>> inputs, int input_size);
std::vector<float> prepare_input(std::span<const float> pixels, int patch_size, int input_size);
// Unaugmented training inputs chunked in order for batch-norm recalibration;
// a trailing singleton joins the previous chunk.
std::vector<Tensor> recalibration_batches(std::span<const std::vector<float>> inputs, int batch_size, int input_size);

// Softmax posteriors (blank, human, robot) for each patch, eval mode.
std::vector<std::array<double, 3>> predict_posteriors(Network& net, std::span<const PatchRecord> patches,
                                                      std::size_t batch_size = 64);
ClassLabel argmax_class(const std::array<double, 3>& posterior);

Network network_from_checkpoint(const ModelConfig& config, const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const Checkpoint& ckpt);
std::pair<ModelConfig, Checkpoint> load_checkpoint(const std::filesystem::path& path);

}  // namespace brushtrace
