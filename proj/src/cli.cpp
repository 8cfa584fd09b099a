#include "brushtrace/cli.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>

#include "brushtrace/dataset.h"
#include "brushtrace/entropy.h"
#include "brushtrace/errors.h"
#include "brushtrace/evaluation.h"
#include "brushtrace/report.h"
#include "brushtrace/synth.h"

namespace brushtrace {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kTrainKeys{"manifest", "patch-size", "stride", "epochs", "lr", "momentum", "batch-size",
                                          "alphas", "model-scale", "augment", "eval-every"};

const std::map<std::string, std::vector<std::string>>& key_table() {
    static const std::map<std::string, std::vector<std::string>> table = [] {
        const std::vector<std::string> common{"out", "seed", "threads"};
        std::map<std::string, std::vector<std::string>> t;
        const auto with = [&](std::vector<std::string> extra) {
            std::vector<std::string> keys = common;
            keys.insert(keys.end(), extra.begin(), extra.end());
            return keys;
        };
        t["synth"] = with({"n-human", "n-robot", "n-hybrid", "size"});
        t["extract"] = with({"manifest", "patch-size", "stride"});
        auto train = kTrainKeys;
        train.push_back("holdout");
        t["train"] = with(train);
        auto cv = kTrainKeys;
        cv.push_back("single-patch-seeds");
        t["crossval"] = with(cv);
        t["baseline"] = with({"manifest", "patch-size", "stride", "n-trees", "max-depth", "min-leaf"});
        t["entropy"] = with({"posteriors", "annotations", "manifest", "tau", "source", "patch-size", "stride"});
        t["report"] = with({"posteriors", "manifest", "tau", "source", "patch-size"});
        t["vote"] = with({"posteriors", "source"});
        return t;
    }();
    return table;
}

std::string describe(const std::string& key) {
    static const std::map<std::string, std::string> help{
        {"out", "output directory"},
        {"seed", "base random seed"},
        {"threads", "worker threads for folds and paintings"},
        {"manifest", "dataset manifest (JSON Lines)"},
        {"annotations", "annotation regions (JSON Lines)"},
        {"posteriors", "patch posterior records written by crossval or baseline"},
        {"patch-size", "patch side in pixels"},
        {"stride", "patch stride in pixels"},
        {"tau", "minimum p_human + p_robot for the entropy gate"},
        {"epochs", "training epochs per fold"},
        {"lr", "learning rate"},
        {"momentum", "SGD momentum"},
        {"batch-size", "mini-batch size"},
        {"alphas", "class weight scales blank,human,robot"},
        {"model-scale", "paper or tiny"},
        {"augment", "true or false"},
        {"eval-every", "epochs between held-out evaluations"},
        {"holdout", "painting ID held out for validation"},
        {"single-patch-seeds", "seeds for the single-patch ablation (0 skips it)"},
        {"n-human", "pure human-style paintings"},
        {"n-robot", "pure robot-style paintings"},
        {"n-hybrid", "hybrid paintings"},
        {"size", "canvas side in pixels"},
        {"n-trees", "random forest trees"},
        {"max-depth", "random forest maximum depth"},
        {"min-leaf", "random forest minimum leaf size"},
        {"source", "posterior source: best or final"},
    };
    const auto it = help.find(key);
    return it == help.end() ? key : it->second;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    std::istringstream in(text);
    T v{};
    in >> v;
    if (!in || !(in >> std::ws).eof()) throw UsageError("--" + key + ": cannot parse '" + text + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw UsageError("--" + key + ": expected true or false, got '" + text + "'");
}

std::array<double, 3> parse_alphas(const std::string& text) {
    std::array<double, 3> a{};
    std::string s = text;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    for (double& v : a) {
        if (!(in >> v)) throw UsageError("--alphas: expected three comma-separated numbers, got '" + text + "'");
    }
    if (!(in >> std::ws).eof()) throw UsageError("--alphas: expected exactly three values, got '" + text + "'");
    return a;
}

void require_positive(const std::string& key, double v) {
    if (!(v > 0)) throw UsageError("--" + key + " must be positive");
}

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"synth", "extract", "train", "crossval", "baseline", "entropy", "report", "vote"};
    return names;
}

const std::vector<std::string>& command_keys(const std::string& command) {
    const auto it = key_table().find(command);
    if (it == key_table().end()) throw UsageError("unknown subcommand '" + command + "'");
    return it->second;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m = model_scale == "tiny" ? ModelConfig::tiny() : ModelConfig::paper();
    m.seed = seed;
    return m;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.lr = lr;
    t.momentum = momentum;
    t.batch_size = batch_size;
    t.epochs = epochs;
    t.seed = seed;
    t.augment = augment;
    t.eval_every = eval_every;
    t.alphas = alphas;
    t.augmentation.seed = seed;
    return t;
}

ForestConfig RunConfig::forest_config() const {
    ForestConfig f;
    f.n_trees = n_trees;
    f.max_depth = max_depth;
    f.min_leaf = min_leaf;
    f.seed = seed;
    return f;
}

json RunConfig::to_json() const {
    json j;
    j["command"] = command;
    if (!config_file.empty()) j["config"] = config_file;
    for (const std::string& k : command_keys(command)) {
        if (k == "out") j[k] = out;
        else if (k == "seed") j[k] = seed;
        else if (k == "threads") j[k] = threads;
        else if (k == "manifest") j[k] = manifest;
        else if (k == "annotations") j[k] = annotations;
        else if (k == "posteriors") j[k] = posteriors;
        else if (k == "patch-size") j[k] = patch_size;
        else if (k == "stride") j[k] = stride;
        else if (k == "tau") j[k] = tau;
        else if (k == "epochs") j[k] = epochs;
        else if (k == "lr") j[k] = lr;
        else if (k == "momentum") j[k] = momentum;
        else if (k == "batch-size") j[k] = batch_size;
        else if (k == "alphas") j[k] = alphas;
        else if (k == "model-scale") j[k] = model_scale;
        else if (k == "augment") j[k] = augment;
        else if (k == "eval-every") j[k] = eval_every;
        else if (k == "holdout") j[k] = holdout;
        else if (k == "single-patch-seeds") j[k] = single_patch_seeds;
        else if (k == "n-human") j[k] = n_human;
        else if (k == "n-robot") j[k] = n_robot;
        else if (k == "n-hybrid") j[k] = n_hybrid;
        else if (k == "size") j[k] = size;
        else if (k == "n-trees") j[k] = n_trees;
        else if (k == "max-depth") j[k] = max_depth;
        else if (k == "min-leaf") j[k] = min_leaf;
        else if (k == "source") j[k] = source;
    }
    return j;
}

RunConfig resolve_run_config(const std::string& command, const std::map<std::string, std::string>& flags,
                             const std::map<std::string, std::string>& file_values,
                             const std::optional<std::string>& env_out) {
    const std::vector<std::string>& keys = command_keys(command);
    std::set<std::string> known;
    for (const auto& [cmd, ks] : key_table()) known.insert(ks.begin(), ks.end());
    for (const auto& [k, v] : file_values) {
        if (!known.count(k)) throw UsageError("config file: unknown key '" + k + "'");
    }
    std::map<std::string, std::string> merged;
    for (const std::string& k : keys) {
        if (auto it = file_values.find(k); it != file_values.end()) merged[k] = it->second;
    }
    for (const auto& [k, v] : flags) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
            throw UsageError("--" + k + " is not an option of '" + command + "'");
        }
        merged[k] = v;
    }

    RunConfig c;
    c.command = command;
    c.source = command == "entropy" ? "final" : "best";
    c.out = env_out && !env_out->empty() ? *env_out : kDefaultOutDir;
    for (const auto& [k, v] : merged) {
        if (k == "out") c.out = v;
        else if (k == "seed") c.seed = parse_number<std::uint64_t>(k, v);
        else if (k == "threads") c.threads = parse_number<int>(k, v);
        else if (k == "manifest") c.manifest = v;
        else if (k == "annotations") c.annotations = v;
        else if (k == "posteriors") c.posteriors = v;
        else if (k == "patch-size") c.patch_size = parse_number<int>(k, v);
        else if (k == "stride") c.stride = parse_number<int>(k, v);
        else if (k == "tau") c.tau = parse_number<double>(k, v);
        else if (k == "epochs") c.epochs = parse_number<int>(k, v);
        else if (k == "lr") c.lr = parse_number<double>(k, v);
        else if (k == "momentum") c.momentum = parse_number<double>(k, v);
        else if (k == "batch-size") c.batch_size = parse_number<int>(k, v);
        else if (k == "alphas") c.alphas = parse_alphas(v);
        else if (k == "model-scale") c.model_scale = v;
        else if (k == "augment") c.augment = parse_bool(k, v);
        else if (k == "eval-every") c.eval_every = parse_number<int>(k, v);
        else if (k == "holdout") c.holdout = v;
        else if (k == "single-patch-seeds") c.single_patch_seeds = parse_number<int>(k, v);
        else if (k == "n-human") c.n_human = parse_number<int>(k, v);
        else if (k == "n-robot") c.n_robot = parse_number<int>(k, v);
        else if (k == "n-hybrid") c.n_hybrid = parse_number<int>(k, v);
        else if (k == "size") c.size = parse_number<int>(k, v);
        else if (k == "n-trees") c.n_trees = parse_number<int>(k, v);
        else if (k == "max-depth") c.max_depth = parse_number<int>(k, v);
        else if (k == "min-leaf") c.min_leaf = parse_number<int>(k, v);
        else if (k == "source") c.source = v;
    }

    require_positive("threads", c.threads);
    require_positive("patch-size", c.patch_size);
    require_positive("stride", c.stride);
    require_positive("epochs", c.epochs);
    require_positive("lr", c.lr);
    require_positive("batch-size", c.batch_size);
    require_positive("eval-every", c.eval_every);
    if (!(c.momentum > 0.0 && c.momentum < 1.0)) throw UsageError("--momentum must lie in (0, 1)");
    if (!(c.tau >= 0.0 && c.tau < 1.0)) throw UsageError("--tau must lie in [0, 1)");
    for (double a : c.alphas) require_positive("alphas", a);
    if (c.model_scale != "paper" && c.model_scale != "tiny") throw UsageError("--model-scale must be paper or tiny");
    if (c.source != "best" && c.source != "final") throw UsageError("--source must be best or final");
    if (c.single_patch_seeds < 0) throw UsageError("--single-patch-seeds must be non-negative");
    if (c.n_human < 0 || c.n_robot < 0 || c.n_hybrid < 0) throw UsageError("corpus counts must be non-negative");
    if (c.size < kDefaultPatchSize) throw UsageError("--size must be at least " + std::to_string(kDefaultPatchSize));
    require_positive("n-trees", c.n_trees);
    require_positive("max-depth", c.max_depth);
    require_positive("min-leaf", c.min_leaf);

    const auto needs = [&](const char* key, const std::string& value) {
        if (std::find(keys.begin(), keys.end(), key) != keys.end() && value.empty()) {
            throw UsageError("'" + command + "' requires --" + key);
        }
    };
    // entropy reads the manifest only to resolve annotation bounds.
    if (command != "entropy") needs("manifest", c.manifest);
    needs("posteriors", c.posteriors);
    return c;
}

namespace {

std::string fixed(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

std::string csv_grid(const std::array<std::array<double, 3>, 3>& g) {
    std::ostringstream s;
    s << "true\\pred,blank,human,robot\n";
    const char* names[3] = {"blank", "human", "robot"};
    for (std::size_t r = 0; r < 3; ++r) {
        s << names[r];
        for (double v : g[r]) s << "," << v;
        s << "\n";
    }
    return s.str();
}

std::string csv_grid(const std::array<std::array<std::int64_t, 3>, 3>& g) {
    std::array<std::array<double, 3>, 3> d{};
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) d[r][c] = static_cast<double>(g[r][c]);
    }
    return csv_grid(d);
}

std::vector<Painting> load_manifest_corpus(const RunConfig& c) {
    return load_corpus(read_manifest(c.manifest), c.patch_size, c.stride);
}

std::vector<PatchPrediction> read_posteriors(const std::string& path) {
    std::vector<PatchPrediction> out;
    for (const json& j : read_json_lines_file(path)) out.push_back(patch_prediction_from_json(j));
    if (out.empty()) throw ValidationError("no posterior records in " + path);
    return out;
}

const Posterior& chosen(const PatchPrediction& p, const RunConfig& c) {
    return c.source == "final" ? p.posterior_final : p.posterior;
}

// Painting IDs in first-appearance order.
std::vector<std::string> painting_order(const std::vector<PatchPrediction>& preds) {
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& p : preds) {
        if (seen.insert(p.painting_id).second) ids.push_back(p.painting_id);
    }
    return ids;
}

void write_crossval_outputs(const fs::path& dir, const std::string& prefix, const CrossValReport& r,
                            const std::vector<PatchPrediction>& extra) {
    write_text(dir / (prefix + "confusion.csv"), csv_grid(r.confusion.counts));
    write_text(dir / (prefix + "confusion_normalized.csv"), csv_grid(r.confusion.row_normalized()));
    std::vector<json> rows;
    for (const FoldResult& f : r.folds) {
        for (const PatchPrediction& p : f.patches) rows.push_back(to_json(p));
    }
    for (const PatchPrediction& p : extra) rows.push_back(to_json(p));
    write_json_lines(dir / (prefix + "posteriors.jsonl"), rows);
}

std::string crossval_summary(const std::string& title, const CrossValReport& r) {
    std::ostringstream s;
    s << title << "\n";
    s << "folds: " << r.folds.size() << "\n";
    s << "patch accuracy (selected epoch): " << fixed(100 * r.mean_accuracy, 2) << "% +/- " << fixed(100 * r.std_accuracy, 2)
      << "%\n";
    s << "patch accuracy (final epoch): " << fixed(100 * r.final_mean_accuracy, 2) << "% +/- "
      << fixed(100 * r.final_std_accuracy, 2) << "%\n";
    s << "balanced accuracy: pooled " << fixed(100 * r.balanced_accuracy_pooled, 2) << "%, fold mean "
      << fixed(100 * r.balanced_accuracy_fold_mean, 2) << "%\n";
    s << "majority vote: " << r.votes_correct << "/" << r.folds.size() << " (" << fixed(100 * r.vote_accuracy, 1) << "%)\n";
    s << "per fold:\n";
    for (const FoldResult& f : r.folds) {
        s << "  " << std::setw(3) << f.fold_id << "  " << std::left << std::setw(24) << f.held_out_painting << std::right
          << to_string(f.held_out_author) << "  acc " << fixed(100 * f.metrics.accuracy, 2) << "%  vote " << to_string(f.vote)
          << "\n";
    }
    return s.str();
}

int cmd_synth(const RunConfig& c, std::ostream& out) {
    const CorpusInfo info = emit_corpus(c.n_human, c.n_robot, c.n_hybrid, c.size, c.seed, c.out);
    json doc = report_envelope("synth", c.to_json());
    json entries = json::array();
    for (const ManifestEntry& e : info.entries) {
        entries.push_back({{"painting_id", e.painting_id}, {"author", std::string(to_string(e.author))}});
    }
    doc["paintings"] = entries;
    doc["annotation_regions"] = info.regions.size();
    write_json(fs::path(c.out) / "synth_report.json", doc);
    out << "wrote " << info.entries.size() << " paintings and " << info.regions.size() << " annotation regions to "
        << c.out << "\nmanifest: " << info.manifest.string() << "\n";
    return 0;
}

int cmd_extract(const RunConfig& c, std::ostream& out) {
    const std::vector<Painting> corpus = load_manifest_corpus(c);
    std::vector<PatchRecord> all;
    json paintings = json::array();
    std::array<std::size_t, 3> totals{};
    for (const Painting& p : corpus) {
        std::array<std::size_t, 3> counts{};
        std::size_t unlabeled = 0;
        for (const PatchRecord& r : p.patches) {
            if (r.label) ++counts[static_cast<std::size_t>(index_of(*r.label))];
            else ++unlabeled;
        }
        for (std::size_t k = 0; k < 3; ++k) totals[k] += counts[k];
        paintings.push_back({{"painting_id", p.entry.painting_id},
                             {"author", std::string(to_string(p.entry.author))},
                             {"width", p.width},
                             {"height", p.height},
                             {"patches", p.patches.size()},
                             {"blank", counts[0]},
                             {"human", counts[1]},
                             {"robot", counts[2]},
                             {"unlabeled", unlabeled}});
        all.insert(all.end(), p.patches.begin(), p.patches.end());
    }
    fs::create_directories(c.out);
    write_patch_cache(fs::path(c.out) / "patches.btpc", all);
    json doc = report_envelope("extract", c.to_json());
    doc["paintings"] = paintings;
    doc["totals"] = {{"blank", totals[0]}, {"human", totals[1]}, {"robot", totals[2]}, {"patches", all.size()}};
    write_json(fs::path(c.out) / "extract_report.json", doc);
    out << "extracted " << all.size() << " patches (blank " << totals[0] << ", human " << totals[1] << ", robot "
        << totals[2] << ") to " << (fs::path(c.out) / "patches.btpc").string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
    const std::vector<Painting> corpus = load_manifest_corpus(c);
    std::vector<PatchRecord> train;
    std::vector<PatchRecord> held;
    bool found = c.holdout.empty();
    for (const Painting& p : corpus) {
        if (p.entry.author == Author::Hybrid) continue;
        if (!c.holdout.empty() && p.entry.painting_id == c.holdout) {
            held.insert(held.end(), p.patches.begin(), p.patches.end());
            found = true;
        } else {
            train.insert(train.end(), p.patches.begin(), p.patches.end());
        }
    }
    if (!found) throw UsageError("--holdout '" + c.holdout + "' is not a pure painting in the manifest");
    const ModelConfig mc = c.model_config();
    const TrainConfig tc = c.train_config();
    std::array<std::size_t, 3> counts{};
    for (const PatchRecord& p : train) ++counts[static_cast<std::size_t>(index_of(*p.label))];
    TrainResult tr = held.empty()
                         ? train_with_weights(train, {}, mc, tc, fold_class_weights(counts, tc.alphas).weights, -1, {})
                         : train_fold(train, held, mc, tc, 0);
    if (held.empty()) tr.weights = fold_class_weights(counts, tc.alphas);

    const fs::path dir(c.out);
    fs::create_directories(dir);
    save_checkpoint(dir / "final.btck", mc, tr.final_state);
    if (!held.empty()) save_checkpoint(dir / "best.btck", mc, tr.best);
    std::vector<json> log;
    for (const EpochRecord& r : tr.history) log.push_back(to_json(r));
    write_json_lines(dir / "train_log.jsonl", log);
    json doc = report_envelope("train", c.to_json());
    doc["model"] = mc.to_json();
    doc["train"] = tc.to_json();
    doc["class_counts"] = tr.weights.counts;
    doc["class_weights"] = tr.weights.weights;
    doc["final_epoch"] = tr.final_epoch;
    if (!held.empty()) {
        doc["holdout"] = c.holdout;
        doc["best_epoch"] = tr.best.epoch;
        doc["best_val_accuracy"] = tr.best.val_accuracy;
        doc["final_val_accuracy"] = tr.final_val_accuracy.value_or(0.0);
    }
    write_json(dir / "train_report.json", doc);
    out << "trained " << tr.final_epoch << " epochs on " << train.size() << " patches";
    if (!held.empty()) out << "; best held-out accuracy " << fixed(100 * tr.best.val_accuracy, 2) << "% at epoch " << tr.best.epoch;
    out << "\n";
    return 0;
}

int cmd_crossval(const RunConfig& c, std::ostream& out) {
    const std::vector<Painting> corpus = load_manifest_corpus(c);
    const ModelConfig mc = c.model_config();
    const TrainConfig tc = c.train_config();
    const fs::path dir(c.out);
    fs::create_directories(dir / "logs");
    fs::create_directories(dir / "checkpoints");
    std::mutex mu;
    LopoOptions opt;
    opt.threads = c.threads;
    opt.score_hybrids = true;
    opt.checkpoint_dir = dir / "checkpoints";
    opt.on_fold = [&](const FoldResult& f) {
        std::lock_guard<std::mutex> lock(mu);
        out << "fold " << f.fold_id << " (" << f.held_out_painting << "): accuracy " << fixed(100 * f.metrics.accuracy, 2)
            << "% at epoch " << f.best_epoch << ", vote " << to_string(f.vote) << std::endl;
    };
    const CrossValReport r = run_lopo(corpus, mc, tc, opt);
    for (const FoldResult& f : r.folds) {
        std::vector<json> log;
        for (const EpochRecord& e : f.history) log.push_back(to_json(e));
        std::ostringstream name;
        name << "fold_" << std::setw(2) << std::setfill('0') << f.fold_id << ".jsonl";
        write_json_lines(dir / "logs" / name.str(), log);
    }
    write_crossval_outputs(dir, "", r, r.hybrid_patches);

    json doc = report_envelope("crossval", c.to_json());
    doc["model"] = mc.to_json();
    doc["train"] = tc.to_json();
    doc["parameters"] = count_params(mc);
    doc["results"] = to_json(r);
    std::string summary = crossval_summary("CNN leave-one-painting-out cross-validation", r);
    if (c.single_patch_seeds > 0) {
        const SinglePatchResult sp = single_patch_regime(corpus, mc, tc, c.single_patch_seeds, c.seed, c.threads);
        doc["single_patch"] = {{"seeds", c.single_patch_seeds},
                               {"accuracies", sp.accuracies},
                               {"mean", sp.mean},
                               {"std", sp.std},
                               {"warnings", sp.warnings}};
        summary += "single-patch regime: " + fixed(100 * sp.mean, 2) + "% +/- " + fixed(100 * sp.std, 2) + "% over " +
                   std::to_string(c.single_patch_seeds) + " seeds\n";
    }
    write_json(dir / "crossval_report.json", doc);
    write_text(dir / "crossval_summary.txt", summary);
    out << summary;
    return 0;
}

int cmd_baseline(const RunConfig& c, std::ostream& out) {
    const std::vector<Painting> corpus = load_manifest_corpus(c);
    const ForestConfig fc = c.forest_config();
    const CrossValReport r = run_baseline_lopo(corpus, fc, c.threads);
    const fs::path dir(c.out);
    fs::create_directories(dir);
    write_crossval_outputs(dir, "baseline_", r, {});
    json doc = report_envelope("baseline", c.to_json());
    doc["forest"] = fc.to_json();
    doc["features"] = "lbp-256 radius 1";
    doc["results"] = to_json(r);
    const std::string summary = crossval_summary("LBP + random forest leave-one-painting-out cross-validation", r);
    write_json(dir / "baseline_report.json", doc);
    write_text(dir / "baseline_summary.txt", summary);
    out << summary;
    return 0;
}

struct EntropyGroup {
    std::string name;
    std::vector<EntropyRecord> records;
};

int cmd_entropy(const RunConfig& c, std::ostream& out) {
    const std::vector<PatchPrediction> preds = read_posteriors(c.posteriors);
    std::vector<AnnotationRegion> regions;
    if (!c.annotations.empty()) regions = read_annotations(c.annotations);
    std::map<std::string, std::pair<int, int>> dims;
    if (!c.manifest.empty()) {
        for (const ManifestEntry& e : read_manifest(c.manifest)) dims[e.painting_id] = image_dimensions(e.path);
    }
    std::map<std::string, std::set<std::pair<int, int>>> annotated;
    for (const std::string& id : painting_order(preds)) {
        const bool has_region = std::any_of(regions.begin(), regions.end(), [&](const AnnotationRegion& r) { return r.painting_id == id; });
        if (!has_region) continue;
        const auto d = dims.find(id);
        if (d == dims.end()) throw UsageError("annotations for '" + id + "' need --manifest to resolve image bounds");
        for (const PatchCoord& pc : select_annotated_patches(d->second.first, d->second.second, id, regions, c.patch_size, c.stride)) {
            annotated[id].insert({pc.x, pc.y});
        }
    }

    EntropyGroup pure{"pure", {}}, human{"pure_human", {}}, robot{"pure_robot", {}}, hybrid{"hybrid_all", {}},
        hybrid_ann{"hybrid_annotated", {}};
    std::vector<json> rows;
    for (const PatchPrediction& p : preds) {
        const auto h = conditional_entropy(chosen(p, c), c.tau);
        EntropyRecord r{p.painting_id, p.x, p.y, h.has_value(), h.value_or(0.0)};
        const bool is_annotated = annotated.count(p.painting_id) && annotated[p.painting_id].count({p.x, p.y});
        json row{{"painting_id", p.painting_id},
                 {"author", std::string(to_string(p.author))},
                 {"x", p.x},
                 {"y", p.y},
                 {"included", r.included},
                 {"annotated", is_annotated}};
        row["h"] = h ? json(*h) : json(nullptr);
        rows.push_back(row);
        if (p.author == Author::Hybrid) {
            hybrid.records.push_back(r);
            if (is_annotated) hybrid_ann.records.push_back(r);
        } else {
            pure.records.push_back(r);
            (p.author == Author::Human ? human : robot).records.push_back(r);
        }
    }

    json doc = report_envelope("entropy", c.to_json());
    json stats = json::object();
    std::map<std::string, std::vector<double>> medians;
    std::vector<std::string> warnings;
    for (const EntropyGroup* g : {&pure, &human, &robot, &hybrid, &hybrid_ann}) {
        const bool any = std::any_of(g->records.begin(), g->records.end(), [](const EntropyRecord& r) { return r.included; });
        if (!any) {
            stats[g->name] = nullptr;
            if (!g->records.empty()) warnings.push_back(g->name + ": no patch passed the tau gate");
            continue;
        }
        const EntropyStats s = summarize(g->records);
        stats[g->name] = to_json(s);
        for (const auto& [id, m] : s.painting_medians) medians[g->name].push_back(m);
    }
    doc["categories"] = stats;
    json tests = json::object();
    const auto compare = [&](const std::string& key, const std::string& a, const std::string& b) {
        if (medians[a].empty() || medians[b].empty()) {
            tests[key] = nullptr;
            return;
        }
        json t = to_json(mann_whitney_u(medians[a], medians[b]));
        t["n_a"] = medians[a].size();
        t["n_b"] = medians[b].size();
        tests[key] = t;
    };
    compare("pure_vs_hybrid_annotated", "pure", "hybrid_annotated");
    compare("pure_human_vs_pure_robot", "pure_human", "pure_robot");
    doc["tests"] = tests;
    doc["warnings"] = warnings;
    const fs::path dir(c.out);
    write_json(dir / "entropy_report.json", doc);
    write_json_lines(dir / "entropy_records.jsonl", rows);

    for (const auto& [name, s] : stats.items()) {
        if (s.is_null()) continue;
        out << name << ": n=" << s["n_patches"].get<std::size_t>() << " median " << fixed(s["median"].get<double>())
            << " mean " << fixed(s["mean"].get<double>()) << "\n";
    }
    for (const auto& [name, t] : tests.items()) {
        if (t.is_null()) continue;
        out << name << ": U=" << t["u"].get<double>() << " p_exact=" << fixed(t["p_exact"].get<double>(), 5)
            << " p_normal=" << fixed(t["p_normal"].get<double>(), 5) << "\n";
    }
    return 0;
}

int cmd_vote(const RunConfig& c, std::ostream& out) {
    const std::vector<PatchPrediction> preds = read_posteriors(c.posteriors);
    json verdicts = json::array();
    std::size_t correct = 0;
    std::size_t pure = 0;
    for (const std::string& id : painting_order(preds)) {
        std::vector<ClassLabel> labels;
        std::vector<Posterior> post;
        Author author = Author::Human;
        for (const PatchPrediction& p : preds) {
            if (p.painting_id != id) continue;
            post.push_back(chosen(p, c));
            labels.push_back(argmax_class(post.back()));
            author = p.author;
        }
        const Verdict v = majority_vote(labels, post);
        json row{{"painting_id", id}, {"author", std::string(to_string(author))}, {"verdict", std::string(to_string(v))}};
        if (author != Author::Hybrid) {
            ++pure;
            const bool ok = (author == Author::Human && v == Verdict::Human) || (author == Author::Robot && v == Verdict::Robot);
            correct += ok;
            row["correct"] = ok;
        }
        verdicts.push_back(row);
        out << id << " (" << to_string(author) << "): " << to_string(v) << "\n";
    }
    json doc = report_envelope("vote", c.to_json());
    doc["verdicts"] = verdicts;
    doc["pure_paintings"] = pure;
    doc["pure_correct"] = correct;
    write_json(fs::path(c.out) / "votes.json", doc);
    if (pure) out << "painting-level accuracy: " << correct << "/" << pure << "\n";
    return 0;
}

int cmd_report(const RunConfig& c, std::ostream& out) {
    const std::vector<PatchPrediction> preds = read_posteriors(c.posteriors);
    std::map<std::string, ManifestEntry> entries;
    for (const ManifestEntry& e : read_manifest(c.manifest)) entries[e.painting_id] = e;
    const fs::path dir = fs::path(c.out) / "heatmaps";
    fs::create_directories(dir);
    json paintings = json::array();
    std::ostringstream md;
    md << "# Attribution report\n\n";
    md << "Class maps: blank white, human blue, robot red. Entropy maps: light = confident, dark = ambiguous. "
          "Gray pixels are not covered by any patch or by any patch passing the tau gate.\n\n";
    md << "| painting | author | verdict | patches | mean H | entropy raster luminance |\n";
    md << "|---|---|---|---|---|---|\n";
    for (const std::string& id : painting_order(preds)) {
        const auto it = entries.find(id);
        if (it == entries.end()) throw ValidationError("painting '" + id + "' is not in the manifest");
        const auto [w, h] = image_dimensions(it->second.path);
        std::vector<PatchCoord> coords;
        std::vector<ClassLabel> classes;
        std::vector<std::optional<double>> ent;
        std::vector<Posterior> post;
        int size = c.patch_size;
        for (const PatchPrediction& p : preds) {
            if (p.painting_id != id) continue;
            coords.push_back({p.x, p.y});
            post.push_back(chosen(p, c));
            classes.push_back(argmax_class(post.back()));
            ent.push_back(conditional_entropy(post.back(), c.tau));
            size = p.size;
        }
        const RgbImage cls = render_class_heatmap(w, h, size, coords, classes);
        const RgbImage eh = render_entropy_heatmap(w, h, size, coords, ent);
        save_rgb_png(dir / (id + "_class.png"), cls);
        save_rgb_png(dir / (id + "_entropy.png"), eh);
        double hsum = 0.0;
        int hn = 0;
        for (const auto& e : ent) {
            if (e) {
                hsum += *e;
                ++hn;
            }
        }
        const Verdict v = majority_vote(classes, post);
        const double lum = raster_mean_luminance(eh);
        paintings.push_back({{"painting_id", id},
                             {"author", std::string(to_string(it->second.author))},
                             {"verdict", std::string(to_string(v))},
                             {"patches", coords.size()},
                             {"mean_entropy", hn ? json(hsum / hn) : json(nullptr)},
                             {"entropy_raster_luminance", lum},
                             {"class_heatmap", "heatmaps/" + id + "_class.png"},
                             {"entropy_heatmap", "heatmaps/" + id + "_entropy.png"}});
        md << "| " << id << " | " << to_string(it->second.author) << " | " << to_string(v) << " | " << coords.size() << " | "
           << (hn ? fixed(hsum / hn) : std::string("n/a")) << " | " << fixed(lum, 1) << " |\n";
    }
    json doc = report_envelope("report", c.to_json());
    doc["paintings"] = paintings;
    write_json(fs::path(c.out) / "report.json", doc);
    write_text(fs::path(c.out) / "report.md", md.str());
    out << "rendered " << paintings.size() << " paintings to " << dir.string() << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spatial authorship attribution for human/robot paintings", "brushtrace"};
    app.require_subcommand(1, 1);
    std::map<std::string, std::map<std::string, std::string>> raw;
    std::map<std::string, std::string> config_paths;
    std::map<std::string, CLI::App*> subs;
    const std::map<std::string, std::string> help{
        {"synth", "generate a synthetic corpus with masks, manifest and annotations"},
        {"extract", "tile a manifest into labeled patches and write a patch cache"},
        {"train", "train one fold (or a full model without --holdout)"},
        {"crossval", "leave-one-painting-out cross-validation with report"},
        {"baseline", "LBP + random forest leave-one-painting-out baseline"},
        {"entropy", "conditional entropy statistics and Mann-Whitney tests"},
        {"report", "render class and entropy heatmaps with a summary"},
        {"vote", "painting-level majority-vote verdicts"},
    };
    for (const std::string& name : command_names()) {
        CLI::App* sub = app.add_subcommand(name, help.at(name));
        subs[name] = sub;
        sub->add_option("--config", config_paths[name], "flat key = value config file");
        for (const std::string& key : command_keys(name)) sub->add_option("--" + key, raw[name][key], describe(key));
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    if (reversed.empty()) {
        err << app.help();
        return 2;
    }
    const std::string& first = reversed.back();
    if (first.rfind("-", 0) != 0 &&
        std::find(command_names().begin(), command_names().end(), first) == command_names().end()) {
        err << "usage error: unknown subcommand '" << first << "'\nrun 'brushtrace --help' for usage\n";
        return 2;
    }
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        // Subcommand help arrives as CallForHelp thrown from the subcommand.
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return 0;
        }
        err << "error: " << e.what() << "\n" << "run 'brushtrace --help' for usage\n";
        return 2;
    }

    try {
        std::string command;
        for (const auto& [name, sub] : subs) {
            if (sub->parsed()) command = name;
        }
        std::map<std::string, std::string> flags;
        for (const std::string& key : command_keys(command)) {
            if (subs[command]->count("--" + key) > 0) flags[key] = raw[command][key];
        }
        std::map<std::string, std::string> file_values;
        if (!config_paths[command].empty()) file_values = read_config_file(config_paths[command]);
        std::optional<std::string> env_out;
        if (const char* e = std::getenv(kOutDirEnv)) env_out = e;
        RunConfig cfg = resolve_run_config(command, flags, file_values, env_out);
        cfg.config_file = config_paths[command];

        if (command == "synth") return cmd_synth(cfg, out);
        if (command == "extract") return cmd_extract(cfg, out);
        if (command == "train") return cmd_train(cfg, out);
        if (command == "crossval") return cmd_crossval(cfg, out);
        if (command == "baseline") return cmd_baseline(cfg, out);
        if (command == "entropy") return cmd_entropy(cfg, out);
        if (command == "report") return cmd_report(cfg, out);
        if (command == "vote") return cmd_vote(cfg, out);
        throw UsageError("unknown subcommand '" + command + "'");
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace brushtrace
