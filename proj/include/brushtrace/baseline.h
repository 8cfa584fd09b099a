#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "brushtrace/evaluation.h"
#include "brushtrace/labels.h"

namespace brushtrace {

inline constexpr std::size_t kLbpBins = 256;

struct LbpHistogram {
    std::array<std::uint64_t, kLbpBins> counts{};
    std::array<double, kLbpBins> normalized{};
};

// Radius-1, 8-neighbor codes. Neighbors are visited clockwise starting at the
// top-left and fill bits 7 down to 0 (top-left = bit 7, right = bit 4,
// left = bit 0); a bit is set when neighbor >= center. Border pixels are
// skipped. Throws UsageError for rasters smaller than 3x3.
LbpHistogram lbp_features(std::span<const float> pixels, int width, int height);
std::uint8_t lbp_code(std::span<const float> pixels, int width, int x, int y);

struct ForestConfig {
    int n_trees = 100;
    int max_depth = 16;
    int min_leaf = 5;
    int features_per_split = 16;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    ClassLabel label = ClassLabel::Blank;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;
    ClassLabel predict(std::span<const double> x) const;
};

struct Forest {
    std::size_t n_features = 0;
    std::vector<DecisionTree> trees;
    bool degenerate = false;  // trained on a single class
    std::string warning;
};

struct ForestPrediction {
    ClassLabel label = ClassLabel::Blank;
    std::array<double, 3> frequencies{};  // vote fractions
};

// Bootstrap-sampled CART trees with Gini splits over a random feature subset
// per node. Throws UsageError on empty input or ragged feature rows.
Forest train_forest(std::span<const std::vector<double>> features, std::span<const ClassLabel> labels,
                    const ForestConfig& config);

// Majority vote over trees; ties go to the earlier class (blank, human, robot).
ForestPrediction predict_forest(const Forest& forest, std::span<const double> features);

// The same fold protocol as run_lopo with LBP features and a forest per fold.
CrossValReport run_baseline_lopo(std::span<const Painting> corpus, const ForestConfig& config, int threads = 1);

}  // namespace brushtrace
