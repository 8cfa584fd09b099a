#include <gtest/gtest.h>

#include <cmath>

#include "brushtrace/baseline.h"
#include "brushtrace/entropy.h"
#include "brushtrace/errors.h"
#include "fixtures.h"

using namespace brushtrace;
using brushtrace::testing::stripe_painting;

namespace {

DecisionTree leaf(ClassLabel c) {
    DecisionTree t;
    TreeNode n;
    n.label = c;
    t.nodes.push_back(n);
    return t;
}

Forest forest_of(std::vector<ClassLabel> votes, std::size_t n_features = 4) {
    Forest f;
    f.n_features = n_features;
    for (ClassLabel c : votes) f.trees.push_back(leaf(c));
    return f;
}

// Reference code with the neighbor order written out as coordinates.
std::uint8_t reference_code(const std::vector<float>& px, int w, int x, int y) {
    const int dx[8] = {-1, 0, 1, 1, 1, 0, -1, -1};
    const int dy[8] = {-1, -1, -1, 0, 1, 1, 1, 0};
    const float c = px[static_cast<std::size_t>(y) * w + x];
    int code = 0;
    for (int k = 0; k < 8; ++k) {
        if (px[static_cast<std::size_t>(y + dy[k]) * w + x + dx[k]] >= c) code |= 1 << (7 - k);
    }
    return static_cast<std::uint8_t>(code);
}

}  // namespace

TEST(Lbp, ConstantPatchCodesAllOnes) {
    const std::vector<float> px(25, 0.4f);
    const LbpHistogram h = lbp_features(px, 5, 5);
    EXPECT_EQ(h.counts[255], 9u);
    EXPECT_EQ(h.normalized[255], 1.0);
}

TEST(Lbp, StrictMaximumCodesZero) {
    std::vector<float> px(9, 0.2f);
    px[4] = 0.9f;
    EXPECT_EQ(lbp_code(px, 3, 1, 1), 0);
    EXPECT_EQ(lbp_features(px, 3, 3).counts[0], 1u);
}

TEST(Lbp, RightNeighborSetsBitFour) {
    const std::vector<float> px{0, 0, 0, 0, 5, 9, 0, 0, 0};
    EXPECT_EQ(lbp_code(px, 3, 1, 1), 16);
}

TEST(Lbp, MatchesReferenceAndCountsInteriorPixels) {
    Rng rng(12);
    const int w = 17, h = 11;
    std::vector<float> px(static_cast<std::size_t>(w) * h);
    for (float& v : px) v = static_cast<float>(rng.below(8)) / 8.0f;
    const LbpHistogram hist = lbp_features(px, w, h);
    std::array<std::uint64_t, kLbpBins> expect{};
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x) {
            EXPECT_EQ(lbp_code(px, w, x, y), reference_code(px, w, x, y));
            ++expect[reference_code(px, w, x, y)];
        }
    EXPECT_EQ(hist.counts, expect);
    std::uint64_t total = 0;
    double mass = 0.0;
    for (std::size_t b = 0; b < kLbpBins; ++b) {
        total += hist.counts[b];
        mass += hist.normalized[b];
    }
    EXPECT_EQ(total, static_cast<std::uint64_t>((w - 2) * (h - 2)));
    EXPECT_NEAR(mass, 1.0, 1e-12);
}

TEST(Lbp, InvariantToConstantShift) {
    Rng rng(13);
    std::vector<float> px(64 * 64);
    for (float& v : px) v = static_cast<float>(rng.below(64)) / 128.0f;
    std::vector<float> shifted = px;
    for (float& v : shifted) v += 0.25f;
    EXPECT_EQ(lbp_features(px, 64, 64).counts, lbp_features(shifted, 64, 64).counts);
}

TEST(Lbp, RejectsTinyRasters) {
    EXPECT_THROW(lbp_features(std::vector<float>(6), 3, 2), UsageError);
    EXPECT_THROW(lbp_features(std::vector<float>(8), 3, 3), ShapeError);
}

TEST(Forest, SingleClassIsConstantPredictor) {
    const std::vector<std::vector<double>> x{{0.1, 0.2}, {0.5, 0.3}, {0.9, 0.7}};
    const std::vector<ClassLabel> y(3, ClassLabel::Robot);
    const Forest f = train_forest(x, y, ForestConfig{});
    EXPECT_TRUE(f.degenerate);
    EXPECT_FALSE(f.warning.empty());
    EXPECT_EQ(predict_forest(f, std::vector<double>{0.0, 0.0}).label, ClassLabel::Robot);
    EXPECT_EQ(predict_forest(f, std::vector<double>{5.0, -3.0}).label, ClassLabel::Robot);
}

TEST(Forest, ThresholdSeparableSetIsFitExactly) {
    Rng rng(17);
    std::vector<std::vector<double>> x;
    std::vector<ClassLabel> y;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> row(5);
        for (double& v : row) v = rng.uniform();
        const bool human = i % 2 == 0;
        row[2] = human ? rng.uniform(0.0, 0.4) : rng.uniform(0.6, 1.0);
        x.push_back(row);
        y.push_back(human ? ClassLabel::Human : ClassLabel::Robot);
    }
    ForestConfig c;
    c.n_trees = 25;
    c.features_per_split = 5;
    c.seed = 4;
    const Forest f = train_forest(x, y, c);
    EXPECT_FALSE(f.degenerate);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(predict_forest(f, x[i]).label, y[i]);
}

TEST(Forest, DeterministicGivenSeed) {
    Rng rng(19);
    std::vector<std::vector<double>> x;
    std::vector<ClassLabel> y;
    for (int i = 0; i < 60; ++i) {
        std::vector<double> row(8);
        for (double& v : row) v = rng.uniform();
        x.push_back(row);
        y.push_back(class_from_index(static_cast<int>(rng.below(3))));
    }
    ForestConfig c;
    c.n_trees = 7;
    c.features_per_split = 3;
    c.seed = 99;
    const Forest a = train_forest(x, y, c);
    const Forest b = train_forest(x, y, c);
    ASSERT_EQ(a.trees.size(), b.trees.size());
    for (std::size_t t = 0; t < a.trees.size(); ++t) {
        ASSERT_EQ(a.trees[t].nodes.size(), b.trees[t].nodes.size());
        for (std::size_t n = 0; n < a.trees[t].nodes.size(); ++n) {
            EXPECT_EQ(a.trees[t].nodes[n].feature, b.trees[t].nodes[n].feature);
            EXPECT_EQ(a.trees[t].nodes[n].threshold, b.trees[t].nodes[n].threshold);
            EXPECT_EQ(a.trees[t].nodes[n].label, b.trees[t].nodes[n].label);
        }
    }
    for (const auto& row : x) EXPECT_EQ(predict_forest(a, row).frequencies, predict_forest(b, row).frequencies);
}

TEST(Forest, RespectsDepthAndLeafLimits) {
    Rng rng(23);
    std::vector<std::vector<double>> x;
    std::vector<ClassLabel> y;
    for (int i = 0; i < 200; ++i) {
        x.push_back({rng.uniform(), rng.uniform()});
        y.push_back(class_from_index(static_cast<int>(rng.below(3))));
    }
    ForestConfig c;
    c.n_trees = 3;
    c.max_depth = 1;
    c.features_per_split = 2;
    const Forest f = train_forest(x, y, c);
    for (const DecisionTree& t : f.trees) EXPECT_LE(t.nodes.size(), 3u);
}

TEST(Forest, RejectsBadInput) {
    const std::vector<std::vector<double>> ragged{{0.1, 0.2}, {0.3}};
    const std::vector<ClassLabel> y{ClassLabel::Human, ClassLabel::Robot};
    EXPECT_THROW(train_forest(ragged, y, ForestConfig{}), UsageError);
    EXPECT_THROW(train_forest(std::vector<std::vector<double>>{}, std::vector<ClassLabel>{}, ForestConfig{}), UsageError);
    ForestConfig bad;
    bad.n_trees = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = ForestConfig{};
    bad.max_depth = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ForestVote, SingleTreeGivesItsLeaf) {
    const ForestPrediction p = predict_forest(forest_of({ClassLabel::Robot}), std::vector<double>(4));
    EXPECT_EQ(p.label, ClassLabel::Robot);
    EXPECT_EQ(p.frequencies, (std::array<double, 3>{0.0, 0.0, 1.0}));
}

TEST(ForestVote, TwoToOneFeedsEntropy) {
    const ForestPrediction p =
        predict_forest(forest_of({ClassLabel::Human, ClassLabel::Human, ClassLabel::Robot}), std::vector<double>(4));
    EXPECT_EQ(p.label, ClassLabel::Human);
    EXPECT_DOUBLE_EQ(p.frequencies[0], 0.0);
    EXPECT_DOUBLE_EQ(p.frequencies[1], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(p.frequencies[2], 1.0 / 3.0);
    EXPECT_NEAR(conditional_entropy(p.frequencies).value(), 0.9183, 5e-5);
}

TEST(ForestVote, TiesGoToEarlierClass) {
    EXPECT_EQ(predict_forest(forest_of({ClassLabel::Robot, ClassLabel::Human}), std::vector<double>(4)).label,
              ClassLabel::Human);
    EXPECT_EQ(predict_forest(forest_of({ClassLabel::Robot, ClassLabel::Blank}), std::vector<double>(4)).label,
              ClassLabel::Blank);
}

TEST(ForestVote, FeatureCountMismatchIsUsageError) {
    EXPECT_THROW(predict_forest(forest_of({ClassLabel::Human}), std::vector<double>(3)), UsageError);
}

TEST(BaselineLopo, FoldsFollowThePureSplit) {
    std::vector<Painting> corpus;
    for (const auto& [id, author] : {std::pair{"h1", Author::Human}, std::pair{"r1", Author::Robot}, std::pair{"h2", Author::Human}}) {
        Painting p;
        p.entry.painting_id = id;
        p.entry.author = author;
        p.patches = stripe_painting(id, {ClassLabel::Blank, *author_class(author)}, 4, 32, hash_string(id));
        corpus.push_back(p);
    }
    ForestConfig c;
    c.n_trees = 10;
    const CrossValReport a = run_baseline_lopo(corpus, c);
    const CrossValReport b = run_baseline_lopo(corpus, c, 2);
    ASSERT_EQ(a.folds.size(), 3u);
    EXPECT_EQ(a.folds[1].held_out_painting, "r1");
    EXPECT_EQ(a.confusion.total(), 24);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}
