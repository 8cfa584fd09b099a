#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "brushtrace/errors.h"
#include "brushtrace/training.h"
#include "fixtures.h"
#include "tempdir.h"

using namespace brushtrace;
using brushtrace::testing::stripe_painting;
using brushtrace::testing::TempDir;

namespace {

const std::vector<ClassLabel> kThree{ClassLabel::Blank, ClassLabel::Human, ClassLabel::Robot};

TrainConfig quick_config(int epochs) {
    TrainConfig c;
    c.lr = 0.01;
    c.batch_size = 16;
    c.epochs = epochs;
    c.augment = false;
    c.seed = 3;
    return c;
}

double accuracy(Network& net, const std::vector<PatchRecord>& patches) {
    const auto post = predict_posteriors(net, patches);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < patches.size(); ++i) ok += argmax_class(post[i]) == *patches[i].label;
    return static_cast<double>(ok) / static_cast<double>(patches.size());
}

}  // namespace

TEST(ClassWeights, ReproducesPublishedCounts) {
    const ClassWeights w = compute_class_weights({17553, 60217, 59207}, {0.01, 1.0, 0.75});
    EXPECT_NEAR(w.weights[0], 0.07803, 1e-3);
    EXPECT_NEAR(w.weights[1], 2.2747, 1e-3);
    EXPECT_NEAR(w.weights[2], 1.7352, 1e-3);
    // Direct evaluation of alpha * N / N_c.
    const double n = 17553.0 + 60217.0 + 59207.0;
    EXPECT_DOUBLE_EQ(w.weights[1], 1.0 * n / 60217.0);
    EXPECT_EQ(w[ClassLabel::Robot], w.weights[2]);
}

TEST(ClassWeights, EqualCountsUnitAlphasGiveThree) {
    const ClassWeights w = compute_class_weights({40, 40, 40}, {1.0, 1.0, 1.0});
    for (double v : w.weights) EXPECT_DOUBLE_EQ(v, 3.0);
}

TEST(ClassWeights, SingletonCounts) {
    const ClassWeights w = compute_class_weights({1, 1, 1});
    EXPECT_NEAR(w.weights[0], 0.03, 1e-15);
    EXPECT_NEAR(w.weights[1], 3.0, 1e-15);
    EXPECT_NEAR(w.weights[2], 2.25, 1e-15);
}

TEST(ClassWeights, RejectsZeroCountsAndNonPositiveAlphas) {
    EXPECT_THROW(compute_class_weights({0, 5, 5}), ConfigError);
    EXPECT_THROW(compute_class_weights({5, 5, 5}, {0.0, 1.0, 0.75}), ConfigError);
    EXPECT_THROW(compute_class_weights({5, 5, 5}, {0.01, -1.0, 0.75}), ConfigError);
}

TEST(ClassWeights, FoldVariantToleratesAbsentClass) {
    const ClassWeights w = fold_class_weights({3, 0, 9});
    EXPECT_DOUBLE_EQ(w.weights[0], 0.01 * 12.0 / 3.0);
    EXPECT_DOUBLE_EQ(w.weights[1], 1.0);
    EXPECT_DOUBLE_EQ(w.weights[2], 0.75 * 12.0 / 9.0);
    EXPECT_THROW(fold_class_weights({0, 0, 0}), ConfigError);
    const ClassWeights full = fold_class_weights({17553, 60217, 59207});
    EXPECT_EQ(full.weights, compute_class_weights({17553, 60217, 59207}).weights);
}

TEST(EpochSchedule, SizesAndTail) {
    const auto b = epoch_schedule(5, 2, 0, 1);
    ASSERT_EQ(b.size(), 3u);
    EXPECT_EQ(b[0].size(), 2u);
    EXPECT_EQ(b[1].size(), 2u);
    EXPECT_EQ(b[2].size(), 1u);
}

TEST(EpochSchedule, DeterministicBijection) {
    const auto a = epoch_schedule(10, 3, 42, 7);
    EXPECT_EQ(a, epoch_schedule(10, 3, 42, 7));
    std::vector<std::size_t> flat;
    for (const auto& batch : a) flat.insert(flat.end(), batch.begin(), batch.end());
    std::sort(flat.begin(), flat.end());
    std::vector<std::size_t> expect(10);
    std::iota(expect.begin(), expect.end(), 0);
    EXPECT_EQ(flat, expect);
    EXPECT_NE(epoch_schedule(10, 10, 42, 7), epoch_schedule(10, 10, 42, 8));
    EXPECT_THROW(epoch_schedule(0, 2, 0, 1), UsageError);
}

TEST(SelectBestEpoch, EarliestWinsTies) {
    std::vector<EpochRecord> h;
    for (int e = 1; e <= 10; ++e) {
        EpochRecord r;
        r.epoch = e;
        if (e % 2 == 1 || e == 4) r.val_accuracy = 0.5;
        if (e == 5 || e == 9) r.val_accuracy = 0.9;
        h.push_back(r);
    }
    const auto best = select_best_epoch(h);
    ASSERT_TRUE(best.has_value());
    EXPECT_EQ(h[*best].epoch, 5);
    EXPECT_FALSE(select_best_epoch(std::vector<EpochRecord>(3)).has_value());
}

TEST(TrainConfigTest, ValidationAndJsonRoundTrip) {
    TrainConfig c = quick_config(7);
    c.alphas = {0.02, 1.0, 0.5};
    const TrainConfig back = TrainConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    c.momentum = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = quick_config(7);
    c.lr = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = quick_config(7);
    c.alphas[0] = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RecalibrationBatches, FoldsTrailingSingleton) {
    std::vector<std::vector<float>> inputs(7, std::vector<float>(4, 0.5f));
    const auto b = recalibration_batches(inputs, 3, 2);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b[0].dim(0), 3u);
    EXPECT_EQ(b[1].dim(0), 4u);
    EXPECT_EQ(recalibration_batches(std::vector<std::vector<float>>(6, std::vector<float>(4)), 3, 2).size(), 2u);
}

TEST(Leakage, SharedPaintingIsRejected) {
    const auto train = stripe_painting("a", kThree, 2, 32, 1);
    auto held = stripe_painting("b", kThree, 1, 32, 2);
    EXPECT_NO_THROW(check_disjoint_paintings(train, held));
    held.push_back(train.front());
    EXPECT_THROW(check_disjoint_paintings(train, held), LeakageError);
    EXPECT_THROW(train_fold(train, held, ModelConfig::tiny(), quick_config(1)), LeakageError);
}

TEST(TrainFold, EmptyHeldOutIsUsageError) {
    const auto train = stripe_painting("a", kThree, 2, 32, 1);
    EXPECT_THROW(train_fold(train, {}, ModelConfig::tiny(), quick_config(1)), UsageError);
}

TEST(TrainFold, UnlabeledPatchIsUsageError) {
    auto train = stripe_painting("a", kThree, 2, 32, 1);
    const auto held = stripe_painting("b", kThree, 1, 32, 2);
    train[1].label.reset();
    EXPECT_THROW(train_fold(train, held, ModelConfig::tiny(), quick_config(1)), UsageError);
}

TEST(TrainFold, HugeLearningRateDiverges) {
    const auto train = stripe_painting("a", kThree, 4, 32, 1);
    const auto held = stripe_painting("b", kThree, 1, 32, 2);
    TrainConfig c = quick_config(5);
    c.lr = 1e12;
    EXPECT_THROW(train_fold(train, held, ModelConfig::tiny(), c), DivergenceError);
}

TEST(TrainFold, SeparablePatchesReachNearPerfectValidation) {
    const auto train = stripe_painting("train", kThree, 20, 32, 11);
    const auto held = stripe_painting("val", kThree, 10, 32, 12);
    ASSERT_EQ(train.size(), 60u);
    TrainConfig c = quick_config(6);
    c.alphas = {1.0, 1.0, 1.0};
    const TrainResult r = train_fold(train, held, ModelConfig::tiny(), c);
    EXPECT_GE(r.best.val_accuracy, 0.99);

    // Monotone selection over the logged history.
    double max_val = 0.0;
    for (const auto& e : r.history) max_val = std::max(max_val, e.val_accuracy.value_or(0.0));
    EXPECT_EQ(r.best.val_accuracy, max_val);
    const auto idx = select_best_epoch(r.history);
    ASSERT_TRUE(idx.has_value());
    EXPECT_EQ(r.history[*idx].epoch, r.best.epoch);
    EXPECT_EQ(r.final_epoch, 6);
    EXPECT_EQ(r.history.size(), 6u);

    // Weights come from the training split only.
    EXPECT_EQ(r.weights.counts, (std::array<std::size_t, 3>{20, 20, 20}));
}

TEST(TrainFold, TinyModelFitsSixtyPatches) {
    const auto train = stripe_painting("train", kThree, 20, 32, 21);
    const TrainResult r = train_with_weights(train, {}, ModelConfig::tiny(), quick_config(60),
                                             fold_class_weights({20, 20, 20}).weights, -1, {});
    Network net = network_from_checkpoint(ModelConfig::tiny(), r.final_state);
    EXPECT_EQ(accuracy(net, train), 1.0);
    EXPECT_FALSE(r.final_val_accuracy.has_value());
}

TEST(TrainFold, RunsAreDeterministic) {
    const auto train = stripe_painting("t", kThree, 4, 32, 5);
    const auto held = stripe_painting("v", kThree, 2, 32, 6);
    TrainConfig c = quick_config(3);
    c.augment = true;
    const TrainResult a = train_fold(train, held, ModelConfig::tiny(), c);
    const TrainResult b = train_fold(train, held, ModelConfig::tiny(), c);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    for (std::size_t t = 0; t < a.final_state.parameters.size(); ++t)
        for (std::size_t i = 0; i < a.final_state.parameters[t].tensor.numel(); ++i)
            EXPECT_EQ(a.final_state.parameters[t].tensor[i], b.final_state.parameters[t].tensor[i]);
}

TEST(TrainFold, EpochCallbackSeesEveryEpoch) {
    const auto train = stripe_painting("t", kThree, 3, 32, 5);
    const auto held = stripe_painting("v", kThree, 1, 32, 6);
    TrainConfig c = quick_config(4);
    c.eval_every = 2;
    std::vector<EpochRecord> seen;
    train_fold(train, held, ModelConfig::tiny(), c, 7, [&](const EpochRecord& r) { seen.push_back(r); });
    ASSERT_EQ(seen.size(), 4u);
    EXPECT_EQ(seen[0].fold, 7);
    EXPECT_FALSE(seen[0].val_accuracy.has_value());
    EXPECT_TRUE(seen[1].val_accuracy.has_value());
    EXPECT_TRUE(seen[3].val_accuracy.has_value());
}

TEST(Checkpoint, ReloadReproducesValidationAccuracy) {
    TempDir dir("ckpt");
    const auto train = stripe_painting("t", kThree, 6, 32, 7);
    const auto held = stripe_painting("v", kThree, 4, 32, 8);
    const TrainResult r = train_fold(train, held, ModelConfig::tiny(), quick_config(4));
    save_checkpoint(dir / "best.btck", ModelConfig::tiny(), r.best);
    const auto [cfg, ck] = load_checkpoint(dir / "best.btck");
    EXPECT_EQ(cfg.digest(), ModelConfig::tiny().digest());
    EXPECT_EQ(ck.epoch, r.best.epoch);
    EXPECT_EQ(ck.val_accuracy, r.best.val_accuracy);
    Network net = network_from_checkpoint(cfg, ck);
    EXPECT_EQ(accuracy(net, held), r.best.val_accuracy);
}

TEST(Checkpoint, BinaryLayoutRoundTrip) {
    CheckpointFile f;
    f.header.config_digest = 0x0123456789abcdefULL;
    f.header.epoch = 12;
    f.header.fold_id = -1;
    f.header.val_accuracy = 0.875;
    f.header.config_json = "{}";
    f.tensors.push_back({"w", Tensor({2, 2}, {1.5, -2.25, 3.0, 0.1})});
    const std::string bytes = encode_checkpoint(f);
    EXPECT_EQ(bytes.substr(0, 4), "BTCK");
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);  // version, little-endian
    const CheckpointFile back = decode_checkpoint(bytes);
    EXPECT_EQ(back.header.config_digest, f.header.config_digest);
    EXPECT_EQ(back.header.epoch, 12u);
    EXPECT_EQ(back.header.val_accuracy, 0.875);
    EXPECT_EQ(back.tensors[0].tensor.shape(), (Shape{2, 2}));
    EXPECT_EQ(back.tensors[0].tensor[1], -2.25);
    EXPECT_EQ(back.tensors[0].tensor[3], static_cast<double>(0.1f));
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), FormatError);
    EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), FormatError);
}

TEST(Checkpoint, DigestMismatchIsRejected) {
    TempDir dir("ckpt_bad");
    Checkpoint ck;
    ck.parameters = Network(ModelConfig::tiny()).state_dict();
    save_checkpoint(dir / "a.btck", ModelConfig::tiny(), ck);
    CheckpointFile f = read_checkpoint(dir / "a.btck");
    f.header.config_digest ^= 1;
    write_checkpoint(dir / "b.btck", f);
    EXPECT_THROW(load_checkpoint(dir / "b.btck"), FormatError);
}
