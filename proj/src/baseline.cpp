#include "brushtrace/baseline.h"

#include <algorithm>
#include <numeric>

#include "brushtrace/errors.h"
#include "brushtrace/rng.h"

namespace brushtrace {

std::uint8_t lbp_code(std::span<const float> pixels, int width, int x, int y) {
    static constexpr int dx[8] = {-1, 0, 1, 1, 1, 0, -1, -1};
    static constexpr int dy[8] = {-1, -1, -1, 0, 1, 1, 1, 0};
    const auto at = [&](int xx, int yy) { return pixels[static_cast<std::size_t>(yy) * width + xx]; };
    const float center = at(x, y);
    unsigned code = 0;
    for (int k = 0; k < 8; ++k) {
        if (at(x + dx[k], y + dy[k]) >= center) code |= 1u << (7 - k);
    }
    return static_cast<std::uint8_t>(code);
}

LbpHistogram lbp_features(std::span<const float> pixels, int width, int height) {
    if (width < 3 || height < 3) throw UsageError("LBP needs at least a 3x3 raster");
    if (pixels.size() != static_cast<std::size_t>(width) * height) throw ShapeError("LBP raster size mismatch");
    LbpHistogram h;
    for (int y = 1; y + 1 < height; ++y) {
        for (int x = 1; x + 1 < width; ++x) ++h.counts[lbp_code(pixels, width, x, y)];
    }
    const double total = static_cast<double>(width - 2) * (height - 2);
    for (std::size_t b = 0; b < kLbpBins; ++b) h.normalized[b] = static_cast<double>(h.counts[b]) / total;
    return h;
}

void ForestConfig::validate() const {
    if (n_trees < 1) throw ConfigError("forest: n_trees must be >= 1");
    if (max_depth < 1) throw ConfigError("forest: max_depth must be >= 1");
    if (min_leaf < 1) throw ConfigError("forest: min_leaf must be >= 1");
    if (features_per_split < 1) throw ConfigError("forest: features_per_split must be >= 1");
}

nlohmann::json ForestConfig::to_json() const {
    return {{"n_trees", n_trees},
            {"max_depth", max_depth},
            {"min_leaf", min_leaf},
            {"features_per_split", features_per_split},
            {"seed", seed}};
}

ClassLabel DecisionTree::predict(std::span<const double> x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const TreeNode& n = nodes[static_cast<std::size_t>(i)];
        i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].label;
}

namespace {

using Counts = std::array<std::size_t, 3>;

ClassLabel majority(const Counts& c) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k) {
        if (c[k] > c[best]) best = k;
    }
    return class_from_index(static_cast<int>(best));
}

double gini_sum(const Counts& c, std::size_t n) {
    if (n == 0) return 0.0;
    double s = 0.0;
    for (std::size_t k : c) s += static_cast<double>(k) * static_cast<double>(k);
    // n * gini = n - sum(c^2)/n
    return static_cast<double>(n) - s / static_cast<double>(n);
}

class TreeBuilder {
  public:
    TreeBuilder(std::span<const std::vector<double>> x, std::span<const ClassLabel> y, const ForestConfig& cfg, Rng& rng)
        : x_(x), y_(y), cfg_(cfg), rng_(rng) {}

    DecisionTree build(std::vector<std::size_t> samples) {
        tree_.nodes.clear();
        grow(samples, 0);
        return std::move(tree_);
    }

  private:
    int grow(std::vector<std::size_t>& samples, int depth) {
        Counts counts{};
        for (std::size_t s : samples) ++counts[static_cast<std::size_t>(index_of(y_[s]))];
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back({});
        tree_.nodes.back().label = majority(counts);
        const bool pure = std::count(counts.begin(), counts.end(), 0u) >= 2;
        const auto min_leaf = static_cast<std::size_t>(cfg_.min_leaf);
        if (pure || depth >= cfg_.max_depth || samples.size() < 2 * min_leaf) return id;

        const std::size_t n_feat = x_[0].size();
        std::vector<std::size_t> feats(n_feat);
        std::iota(feats.begin(), feats.end(), std::size_t{0});
        const std::size_t m = std::min(n_feat, static_cast<std::size_t>(cfg_.features_per_split));
        for (std::size_t i = 0; i < m; ++i) std::swap(feats[i], feats[i + rng_.below(n_feat - i)]);

        const double parent = gini_sum(counts, samples.size());
        double best_score = parent - 1e-12;
        int best_feat = -1;
        double best_thr = 0.0;
        std::vector<std::size_t> order = samples;
        for (std::size_t fi = 0; fi < m; ++fi) {
            const std::size_t f = feats[fi];
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return x_[a][f] < x_[b][f] || (x_[a][f] == x_[b][f] && a < b);
            });
            Counts left{};
            Counts right = counts;
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                const auto c = static_cast<std::size_t>(index_of(y_[order[i]]));
                ++left[c];
                --right[c];
                const double v = x_[order[i]][f];
                const double next = x_[order[i + 1]][f];
                if (v == next) continue;
                const std::size_t nl = i + 1;
                const std::size_t nr = order.size() - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                const double score = gini_sum(left, nl) + gini_sum(right, nr);
                if (score < best_score) {
                    best_score = score;
                    best_feat = static_cast<int>(f);
                    best_thr = v + (next - v) / 2.0;
                }
            }
        }
        if (best_feat < 0) return id;

        std::vector<std::size_t> left_s;
        std::vector<std::size_t> right_s;
        for (std::size_t s : samples) {
            (x_[s][static_cast<std::size_t>(best_feat)] <= best_thr ? left_s : right_s).push_back(s);
        }
        samples.clear();
        samples.shrink_to_fit();
        const int l = grow(left_s, depth + 1);
        const int r = grow(right_s, depth + 1);
        TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = best_feat;
        node.threshold = best_thr;
        node.left = l;
        node.right = r;
        return id;
    }

    std::span<const std::vector<double>> x_;
    std::span<const ClassLabel> y_;
    const ForestConfig& cfg_;
    Rng& rng_;
    DecisionTree tree_;
};

}  // namespace

Forest train_forest(std::span<const std::vector<double>> features, std::span<const ClassLabel> labels,
                    const ForestConfig& config) {
    config.validate();
    if (features.empty()) throw UsageError("train_forest: no samples");
    if (features.size() != labels.size()) throw UsageError("train_forest: feature and label counts differ");
    Forest forest;
    forest.n_features = features[0].size();
    if (forest.n_features == 0) throw UsageError("train_forest: empty feature vectors");
    for (const auto& f : features) {
        if (f.size() != forest.n_features) throw UsageError("train_forest: ragged feature rows");
    }
    Counts counts{};
    for (ClassLabel l : labels) ++counts[static_cast<std::size_t>(index_of(l))];
    if (std::count(counts.begin(), counts.end(), 0u) >= 2) {
        forest.degenerate = true;
        forest.warning = "training data holds a single class (" + std::string(to_string(labels[0])) +
                         "); the forest is a constant predictor";
        DecisionTree t;
        t.nodes.push_back({-1, 0.0, -1, -1, labels[0]});
        forest.trees.assign(static_cast<std::size_t>(config.n_trees), t);
        return forest;
    }
    for (int t = 0; t < config.n_trees; ++t) {
        Rng rng(mix_seed(config.seed, 0xf0, static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> boot(features.size());
        for (std::size_t& b : boot) b = rng.below(features.size());
        TreeBuilder builder(features, labels, config, rng);
        forest.trees.push_back(builder.build(std::move(boot)));
    }
    return forest;
}

ForestPrediction predict_forest(const Forest& forest, std::span<const double> features) {
    if (forest.trees.empty()) throw UsageError("predict_forest: untrained forest");
    if (features.size() != forest.n_features) {
        throw UsageError("predict_forest: expected " + std::to_string(forest.n_features) + " features, got " +
                         std::to_string(features.size()));
    }
    Counts votes{};
    for (const DecisionTree& t : forest.trees) ++votes[static_cast<std::size_t>(index_of(t.predict(features)))];
    ForestPrediction p;
    p.label = majority(votes);
    for (std::size_t c = 0; c < 3; ++c) {
        p.frequencies[c] = static_cast<double>(votes[c]) / static_cast<double>(forest.trees.size());
    }
    return p;
}

CrossValReport run_baseline_lopo(std::span<const Painting> corpus, const ForestConfig& config, int threads) {
    config.validate();
    std::vector<std::size_t> pure;
    bool human = false;
    bool robot = false;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const Author a = corpus[i].entry.author;
        if (a == Author::Hybrid) continue;
        pure.push_back(i);
        human = human || a == Author::Human;
        robot = robot || a == Author::Robot;
    }
    if (pure.size() < 2 || !human || !robot) {
        throw UsageError("baseline cross-validation needs at least 2 pure paintings covering both authors");
    }

    std::vector<std::vector<std::vector<double>>> feats(corpus.size());
    parallel_for(pure.size(), threads, [&](std::size_t k) {
        for (const PatchRecord& p : corpus[pure[k]].patches) {
            const LbpHistogram h = lbp_features(p.pixels, p.size, p.size);
            feats[pure[k]].emplace_back(h.normalized.begin(), h.normalized.end());
        }
    });

    std::vector<FoldResult> folds(pure.size());
    parallel_for(pure.size(), threads, [&](std::size_t k) {
        const Painting& held = corpus[pure[k]];
        std::vector<std::vector<double>> x;
        std::vector<ClassLabel> y;
        std::vector<PatchRecord> train_ids;
        for (std::size_t i : pure) {
            if (i == pure[k]) continue;
            for (std::size_t j = 0; j < corpus[i].patches.size(); ++j) {
                x.push_back(feats[i][j]);
                y.push_back(*corpus[i].patches[j].label);
                train_ids.push_back({corpus[i].patches[j].painting_id, 0, 0, 1, std::nullopt, {}});
            }
        }
        check_disjoint_paintings(train_ids, held.patches);
        ForestConfig cfg = config;
        cfg.seed = mix_seed(config.seed, static_cast<std::uint64_t>(k));
        const Forest forest = train_forest(x, y, cfg);

        FoldResult& f = folds[k];
        f.fold_id = static_cast<int>(k);
        f.held_out_painting = held.entry.painting_id;
        f.held_out_author = held.entry.author;
        std::vector<ClassLabel> preds;
        std::vector<ClassLabel> labels;
        std::vector<Posterior> post;
        for (std::size_t j = 0; j < held.patches.size(); ++j) {
            const ForestPrediction p = predict_forest(forest, feats[pure[k]][j]);
            const PatchRecord& r = held.patches[j];
            preds.push_back(p.label);
            labels.push_back(*r.label);
            post.push_back(p.frequencies);
            f.patches.push_back({r.painting_id, held.entry.author, r.x, r.y, r.size, r.label, p.label, p.frequencies,
                                 p.frequencies, "heldout"});
        }
        f.metrics = compute_metrics(preds, labels);
        f.final_metrics = f.metrics;
        f.vote = majority_vote(preds, post);
    });
    return aggregate_folds(std::move(folds));
}

}  // namespace brushtrace
