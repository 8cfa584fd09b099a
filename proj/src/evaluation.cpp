#include "brushtrace/evaluation.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "brushtrace/errors.h"
#include "brushtrace/rng.h"

namespace brushtrace {

using nlohmann::json;

std::int64_t ConfusionMatrix::total() const {
    std::int64_t t = 0;
    for (const auto& row : counts) t += std::accumulate(row.begin(), row.end(), std::int64_t{0});
    return t;
}

std::int64_t ConfusionMatrix::trace() const { return counts[0][0] + counts[1][1] + counts[2][2]; }

std::int64_t ConfusionMatrix::support(ClassLabel c) const {
    const auto& row = counts[index_of(c)];
    return std::accumulate(row.begin(), row.end(), std::int64_t{0});
}

std::array<std::array<double, 3>, 3> ConfusionMatrix::row_normalized() const {
    std::array<std::array<double, 3>, 3> out{};
    for (std::size_t r = 0; r < 3; ++r) {
        const std::int64_t s = support(class_from_index(static_cast<int>(r)));
        if (s == 0) continue;
        for (std::size_t c = 0; c < 3; ++c) out[r][c] = static_cast<double>(counts[r][c]) / static_cast<double>(s);
    }
    return out;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) counts[r][c] += other.counts[r][c];
    }
    return *this;
}

Metrics compute_metrics(std::span<const ClassLabel> preds, std::span<const ClassLabel> labels) {
    if (preds.size() != labels.size()) {
        throw UsageError("compute_metrics: " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
    }
    if (preds.empty()) throw UsageError("compute_metrics: no samples");
    Metrics m;
    m.n = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i) m.confusion.add(labels[i], preds[i]);
    m.accuracy = static_cast<double>(m.confusion.trace()) / static_cast<double>(m.n);
    double recall_sum = 0.0;
    int recall_n = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        std::int64_t row = 0;
        std::int64_t col = 0;
        for (std::size_t k = 0; k < 3; ++k) {
            row += m.confusion.counts[c][k];
            col += m.confusion.counts[k][c];
        }
        const auto hit = static_cast<double>(m.confusion.counts[c][c]);
        if (row > 0) {
            m.recall[c] = hit / static_cast<double>(row);
            recall_sum += *m.recall[c];
            ++recall_n;
        }
        if (col > 0) m.precision[c] = hit / static_cast<double>(col);
    }
    m.balanced_accuracy = recall_sum / recall_n;
    return m;
}

Verdict majority_vote(std::span<const ClassLabel> preds, std::span<const Posterior> posteriors) {
    if (preds.empty()) throw UsageError("majority_vote: no patch predictions");
    if (!posteriors.empty() && posteriors.size() != preds.size()) {
        throw UsageError("majority_vote: posterior count does not match prediction count");
    }
    std::size_t human = 0;
    std::size_t robot = 0;
    for (ClassLabel p : preds) {
        if (p == ClassLabel::Human) ++human;
        if (p == ClassLabel::Robot) ++robot;
    }
    if (human == 0 && robot == 0) return Verdict::Indeterminate;
    if (human > robot) return Verdict::Human;
    if (robot > human) return Verdict::Robot;
    if (posteriors.empty()) return Verdict::Indeterminate;
    double ph = 0.0;
    double pr = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == ClassLabel::Blank) continue;
        ph += posteriors[i][1];
        pr += posteriors[i][2];
    }
    if (ph > pr) return Verdict::Human;
    if (pr > ph) return Verdict::Robot;
    return Verdict::Indeterminate;
}

std::vector<Painting> load_corpus(std::span<const ManifestEntry> entries, int patch_size, int stride) {
    std::vector<Painting> out;
    for (const ManifestEntry& e : entries) {
        GrayImage img = load_image(e.path);
        img.painting_id = e.painting_id;
        img.author = e.author;
        Painting p;
        p.entry = e;
        p.width = img.width;
        p.height = img.height;
        p.patches = extract_patches(img, patch_size, stride);
        if (e.author != Author::Hybrid) label_patches(p.patches, e.author);
        out.push_back(std::move(p));
    }
    return out;
}

json to_json(const PatchPrediction& p) {
    json j{{"painting_id", p.painting_id},
           {"author", std::string(to_string(p.author))},
           {"x", p.x},
           {"y", p.y},
           {"size", p.size},
           {"predicted", std::string(to_string(p.predicted))},
           {"posterior", p.posterior},
           {"posterior_final", p.posterior_final},
           {"source", p.source}};
    j["label"] = p.label ? json(std::string(to_string(*p.label))) : json(nullptr);
    return j;
}

PatchPrediction patch_prediction_from_json(const json& j) {
    PatchPrediction p;
    try {
        p.painting_id = j.at("painting_id").get<std::string>();
        p.author = parse_author(j.at("author").get<std::string>());
        p.x = j.at("x").get<int>();
        p.y = j.at("y").get<int>();
        p.size = j.at("size").get<int>();
        if (!j.at("label").is_null()) p.label = parse_class(j.at("label").get<std::string>());
        p.predicted = parse_class(j.at("predicted").get<std::string>());
        p.posterior = j.at("posterior").get<Posterior>();
        p.posterior_final = j.at("posterior_final").get<Posterior>();
        p.source = j.value("source", std::string("heldout"));
    } catch (const json::exception& e) {
        throw FormatError(std::string("posterior record: ") + e.what());
    }
    return p;
}

std::pair<double, double> mean_std(std::span<const double> values) {
    if (values.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& task) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
    std::vector<std::exception_ptr> errors(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                task(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
            if (errors[i]) std::rethrow_exception(errors[i]);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n && !failed; i = next++) {
                try {
                    task(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                    failed = true;
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

namespace {

struct PureSplit {
    std::vector<std::size_t> pure;  // indices into the corpus
};

PureSplit pure_paintings(std::span<const Painting> corpus) {
    PureSplit s;
    bool human = false;
    bool robot = false;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const Author a = corpus[i].entry.author;
        if (a == Author::Hybrid) continue;
        s.pure.push_back(i);
        human = human || a == Author::Human;
        robot = robot || a == Author::Robot;
    }
    if (s.pure.size() < 2) throw UsageError("cross-validation needs at least 2 pure paintings");
    if (!human || !robot) throw UsageError("cross-validation needs at least one human and one robot painting");
    return s;
}

std::vector<PatchRecord> gather(std::span<const Painting> corpus, std::span<const std::size_t> indices, std::size_t skip) {
    std::vector<PatchRecord> out;
    for (std::size_t i : indices) {
        if (i == skip) continue;
        out.insert(out.end(), corpus[i].patches.begin(), corpus[i].patches.end());
    }
    return out;
}

std::vector<ClassLabel> argmax_all(std::span<const Posterior> post) {
    std::vector<ClassLabel> out;
    for (const Posterior& p : post) out.push_back(argmax_class(p));
    return out;
}

std::optional<Verdict> expected_verdict(Author a) {
    if (a == Author::Human) return Verdict::Human;
    if (a == Author::Robot) return Verdict::Robot;
    return std::nullopt;
}

}  // namespace

CrossValReport aggregate_folds(std::vector<FoldResult> folds) {
    CrossValReport r;
    std::vector<double> acc;
    std::vector<double> final_acc;
    std::vector<double> bal;
    for (const FoldResult& f : folds) {
        acc.push_back(f.metrics.accuracy);
        final_acc.push_back(f.final_metrics.accuracy);
        bal.push_back(f.metrics.balanced_accuracy);
        r.confusion += f.metrics.confusion;
        if (expected_verdict(f.held_out_author) == f.vote) ++r.votes_correct;
    }
    std::tie(r.mean_accuracy, r.std_accuracy) = mean_std(acc);
    std::tie(r.final_mean_accuracy, r.final_std_accuracy) = mean_std(final_acc);
    r.balanced_accuracy_fold_mean = mean_std(bal).first;
    double recall_sum = 0.0;
    int recall_n = 0;
    for (ClassLabel c : kAllClasses) {
        const std::int64_t s = r.confusion.support(c);
        if (s == 0) continue;
        recall_sum += static_cast<double>(r.confusion.counts[index_of(c)][index_of(c)]) / static_cast<double>(s);
        ++recall_n;
    }
    r.balanced_accuracy_pooled = recall_n ? recall_sum / recall_n : 0.0;
    r.vote_accuracy = folds.empty() ? 0.0 : static_cast<double>(r.votes_correct) / static_cast<double>(folds.size());
    r.folds = std::move(folds);
    return r;
}

CrossValReport run_lopo(std::span<const Painting> corpus, const ModelConfig& model_config, const TrainConfig& train_config,
                        const LopoOptions& options) {
    model_config.validate();
    train_config.validate();
    const PureSplit split = pure_paintings(corpus);
    std::vector<FoldResult> folds(split.pure.size());

    parallel_for(split.pure.size(), options.threads, [&](std::size_t k) {
        const Painting& held = corpus[split.pure[k]];
        const std::vector<PatchRecord> train = gather(corpus, split.pure, split.pure[k]);
        check_disjoint_paintings(train, held.patches);
        const int fold_id = static_cast<int>(k);
        TrainResult tr = train_fold(train, held.patches, model_config, train_config, fold_id);

        Network best = network_from_checkpoint(model_config, tr.best);
        Network last = network_from_checkpoint(model_config, tr.final_state);
        const auto post_best = predict_posteriors(best, held.patches);
        const auto post_final = predict_posteriors(last, held.patches);
        const auto pred_best = argmax_all(post_best);
        const auto pred_final = argmax_all(post_final);
        std::vector<ClassLabel> labels;
        for (const PatchRecord& p : held.patches) labels.push_back(*p.label);

        FoldResult& f = folds[k];
        f.fold_id = fold_id;
        f.held_out_painting = held.entry.painting_id;
        f.held_out_author = held.entry.author;
        f.metrics = compute_metrics(pred_best, labels);
        f.final_metrics = compute_metrics(pred_final, labels);
        f.best_epoch = tr.best.epoch;
        f.final_epoch = tr.final_epoch;
        f.vote = majority_vote(pred_best, post_best);
        f.history = std::move(tr.history);
        f.weights = tr.weights;
        for (std::size_t i = 0; i < held.patches.size(); ++i) {
            const PatchRecord& p = held.patches[i];
            f.patches.push_back({p.painting_id, held.entry.author, p.x, p.y, p.size, p.label, pred_best[i], post_best[i],
                                 post_final[i], "heldout"});
        }
        if (options.checkpoint_dir) {
            save_checkpoint(*options.checkpoint_dir / ("fold_" + std::to_string(fold_id) + ".btck"), model_config, tr.best);
        }
        if (options.on_fold) options.on_fold(f);
    });

    CrossValReport report = aggregate_folds(std::move(folds));

    if (options.score_hybrids) {
        std::vector<std::size_t> hybrids;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            if (corpus[i].entry.author == Author::Hybrid) hybrids.push_back(i);
        }
        if (!hybrids.empty()) {
            const std::vector<PatchRecord> train = gather(corpus, split.pure, corpus.size());
            std::array<std::size_t, 3> counts{};
            for (const PatchRecord& p : train) ++counts[static_cast<std::size_t>(index_of(*p.label))];
            const ClassWeights cw = fold_class_weights(counts, train_config.alphas);
            TrainResult tr = train_with_weights(train, {}, model_config, train_config, cw.weights, -1, {});
            Network net = network_from_checkpoint(model_config, tr.final_state);
            if (options.checkpoint_dir) save_checkpoint(*options.checkpoint_dir / "full_model.btck", model_config, tr.final_state);
            for (std::size_t h : hybrids) {
                const Painting& p = corpus[h];
                const auto post = predict_posteriors(net, p.patches);
                for (std::size_t i = 0; i < p.patches.size(); ++i) {
                    const PatchRecord& r = p.patches[i];
                    report.hybrid_patches.push_back(
                        {r.painting_id, Author::Hybrid, r.x, r.y, r.size, std::nullopt, argmax_class(post[i]), post[i], post[i], "full_model"});
                }
            }
        }
    }
    return report;
}

SinglePatchResult single_patch_regime(std::span<const Painting> corpus, const ModelConfig& model_config,
                                      const TrainConfig& train_config, int n_seeds, std::uint64_t base_seed, int threads) {
    if (n_seeds < 1) throw UsageError("single_patch_regime: n_seeds must be positive");
    model_config.validate();
    train_config.validate();
    const PureSplit split = pure_paintings(corpus);
    SinglePatchResult result;

    for (int s = 0; s < n_seeds; ++s) {
        const std::uint64_t seed = mix_seed(base_seed, 0x51, static_cast<std::uint64_t>(s));
        std::vector<PatchRecord> chosen;
        for (std::size_t i : split.pure) {
            const Painting& p = corpus[i];
            std::vector<std::size_t> candidates;
            for (std::size_t k = 0; k < p.patches.size(); ++k) {
                if (p.patches[k].label && *p.patches[k].label != ClassLabel::Blank) candidates.push_back(k);
            }
            if (candidates.empty()) {
                if (s == 0) result.warnings.push_back("painting '" + p.entry.painting_id + "' has no non-blank patches; skipped");
                continue;
            }
            Rng rng(mix_seed(seed, hash_string(p.entry.painting_id)));
            chosen.push_back(p.patches[candidates[rng.below(candidates.size())]]);
        }
        if (chosen.size() < 3) throw UsageError("single_patch_regime: fewer than 3 paintings with non-blank patches");

        TrainConfig cfg = train_config;
        cfg.seed = mix_seed(train_config.seed, seed);
        std::vector<int> correct(chosen.size(), 0);
        parallel_for(chosen.size(), threads, [&](std::size_t k) {
            std::vector<PatchRecord> train;
            for (std::size_t j = 0; j < chosen.size(); ++j) {
                if (j != k) train.push_back(chosen[j]);
            }
            const std::vector<PatchRecord> test{chosen[k]};
            std::array<std::size_t, 3> counts{};
            for (const PatchRecord& p : train) ++counts[static_cast<std::size_t>(index_of(*p.label))];
            const std::array<double, 3> w = fold_class_weights(counts, cfg.alphas).weights;
            TrainResult tr = train_with_weights(train, test, model_config, cfg, w, static_cast<int>(k), {});
            Network net = network_from_checkpoint(model_config, tr.final_state);
            const auto post = predict_posteriors(net, test);
            correct[k] = argmax_class(post[0]) == *test[0].label ? 1 : 0;
        });
        result.accuracies.push_back(static_cast<double>(std::accumulate(correct.begin(), correct.end(), 0)) /
                                    static_cast<double>(chosen.size()));
    }
    std::tie(result.mean, result.std) = mean_std(result.accuracies);
    return result;
}

namespace {

json optional_array(const std::array<std::optional<double>, 3>& v) {
    json out = json::array();
    for (const auto& x : v) out.push_back(x ? json(*x) : json(nullptr));
    return out;
}

}  // namespace

json to_json(const Metrics& m) {
    return {{"n", m.n},
            {"accuracy", m.accuracy},
            {"balanced_accuracy", m.balanced_accuracy},
            {"recall", optional_array(m.recall)},
            {"precision", optional_array(m.precision)},
            {"confusion", m.confusion.counts},
            {"confusion_normalized", m.confusion.row_normalized()}};
}

json to_json(const CrossValReport& r) {
    json folds = json::array();
    for (const FoldResult& f : r.folds) {
        folds.push_back({{"fold", f.fold_id},
                         {"held_out_painting", f.held_out_painting},
                         {"author", std::string(to_string(f.held_out_author))},
                         {"best_epoch", f.best_epoch},
                         {"final_epoch", f.final_epoch},
                         {"metrics", to_json(f.metrics)},
                         {"final_metrics", to_json(f.final_metrics)},
                         {"vote", std::string(to_string(f.vote))},
                         {"class_weights", f.weights.weights},
                         {"class_counts", f.weights.counts}});
    }
    return {{"classes", {"blank", "human", "robot"}},
            {"folds", folds},
            {"n_folds", r.folds.size()},
            {"mean_accuracy", r.mean_accuracy},
            {"std_accuracy", r.std_accuracy},
            {"final_mean_accuracy", r.final_mean_accuracy},
            {"final_std_accuracy", r.final_std_accuracy},
            {"balanced_accuracy_pooled", r.balanced_accuracy_pooled},
            {"balanced_accuracy_fold_mean", r.balanced_accuracy_fold_mean},
            {"confusion", r.confusion.counts},
            {"confusion_normalized", r.confusion.row_normalized()},
            {"votes_correct", r.votes_correct},
            {"vote_accuracy", r.vote_accuracy}};
}

}  // namespace brushtrace
