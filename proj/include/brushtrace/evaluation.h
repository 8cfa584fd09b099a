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

#include "brushtrace/dataset.h"
#include "brushtrace/labels.h"
#include "brushtrace/model.h"
#include "brushtrace/patches.h"
#include "brushtrace/training.h"

namespace brushtrace {

using Posterior = std::array<double, 3>;  // blank, human, robot

// Rows are the true class, columns the predicted class (blank, human, robot).
struct ConfusionMatrix {
    std::array<std::array<std::int64_t, 3>, 3> counts{};

    void add(ClassLabel truth, ClassLabel predicted) { ++counts[index_of(truth)][index_of(predicted)]; }
    std::int64_t total() const;
    std::int64_t trace() const;
    std::int64_t support(ClassLabel c) const;
    // Rows with zero support normalize to all zeros.
    std::array<std::array<double, 3>, 3> row_normalized() const;

    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct Metrics {
    std::size_t n = 0;
    double accuracy = 0.0;
    std::array<std::optional<double>, 3> recall;     // absent without support
    std::array<std::optional<double>, 3> precision;  // absent when never predicted
    double balanced_accuracy = 0.0;                  // mean of defined recalls
    ConfusionMatrix confusion;
};

Metrics compute_metrics(std::span<const ClassLabel> preds, std::span<const ClassLabel> labels);

// Blank predictions are dropped and the modal remaining class wins. A
// Human/Robot tie goes to the larger summed posterior; without posteriors (or
// on an exact posterior tie) the verdict is Indeterminate, as it is when every
// prediction is Blank. Throws UsageError on an empty list or when the
// posterior count differs from the prediction count.
Verdict majority_vote(std::span<const ClassLabel> preds, std::span<const Posterior> posteriors = {});

// One scanned painting tiled into patches. Pure paintings carry labels;
// hybrid patches are unlabeled.
struct Painting {
    ManifestEntry entry;
    int width = 0;
    int height = 0;
    std::vector<PatchRecord> patches;
};

std::vector<Painting> load_corpus(std::span<const ManifestEntry> entries, int patch_size = kDefaultPatchSize,
                                  int stride = kDefaultStride);

struct PatchPrediction {
    std::string painting_id;
    Author author = Author::Human;
    int x = 0;
    int y = 0;
    int size = kDefaultPatchSize;
    std::optional<ClassLabel> label;
    ClassLabel predicted = ClassLabel::Blank;  // from the selected checkpoint
    Posterior posterior{};                     // selected checkpoint
    Posterior posterior_final{};               // final-epoch weights
    std::string source;                        // "heldout" or "full_model"
};

nlohmann::json to_json(const PatchPrediction& p);
PatchPrediction patch_prediction_from_json(const nlohmann::json& j);

struct FoldResult {
    int fold_id = 0;
    std::string held_out_painting;
    Author held_out_author = Author::Human;
    Metrics metrics;        // selected (best-epoch) checkpoint
    Metrics final_metrics;  // last epoch
    int best_epoch = 0;
    int final_epoch = 0;
    Verdict vote = Verdict::Indeterminate;
    std::vector<PatchPrediction> patches;
    std::vector<EpochRecord> history;
    ClassWeights weights;
};

struct CrossValReport {
    std::vector<FoldResult> folds;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  // sample standard deviation over folds
    double final_mean_accuracy = 0.0;
    double final_std_accuracy = 0.0;
    double balanced_accuracy_pooled = 0.0;
    double balanced_accuracy_fold_mean = 0.0;
    ConfusionMatrix confusion;
    std::size_t votes_correct = 0;
    double vote_accuracy = 0.0;
    // Posteriors for hybrid paintings from a model trained on every pure
    // painting; empty unless requested.
    std::vector<PatchPrediction> hybrid_patches;
};

struct LopoOptions {
    int threads = 1;
    bool score_hybrids = false;
    // Called from worker threads after each fold finishes.
    std::function<void(const FoldResult&)> on_fold;
    // When set, each fold's selected checkpoint is written here.
    std::optional<std::filesystem::path> checkpoint_dir;
};

// One fold per pure painting; hybrid paintings never enter a fold.
// Throws UsageError with fewer than 2 pure paintings or when an author class is
// missing, LeakageError when a fold's splits share a painting ID.
CrossValReport run_lopo(std::span<const Painting> corpus, const ModelConfig& model_config, const TrainConfig& train_config,
                        const LopoOptions& options = {});

// Aggregates fold results (already in fold order) into a report.
CrossValReport aggregate_folds(std::vector<FoldResult> folds);

// Sample mean and standard deviation (n - 1 denominator; 0 for n < 2).
std::pair<double, double> mean_std(std::span<const double> values);

struct SinglePatchResult {
    std::vector<double> accuracies;  // one per seed
    double mean = 0.0;
    double std = 0.0;
    std::vector<std::string> warnings;
};

// Per seed, one uniformly sampled non-blank patch per pure painting is used
// under the LOPO split: train on the other paintings' patches, test on the
// held-out one. Accuracy is the fraction of held-out patches classified
// correctly, scored with the final-epoch weights.
SinglePatchResult single_patch_regime(std::span<const Painting> corpus, const ModelConfig& model_config,
                                      const TrainConfig& train_config, int n_seeds = 10, std::uint64_t base_seed = 0,
                                      int threads = 1);

nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const CrossValReport& r);

// Runs `task(i)` for i in [0, n) on up to `threads` workers; rethrows the
// first failure in index order.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& task);

}  // namespace brushtrace
