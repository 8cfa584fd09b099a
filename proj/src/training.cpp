#include "brushtrace/training.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "brushtrace/errors.h"
#include "brushtrace/optim.h"

namespace brushtrace {

ClassWeights compute_class_weights(std::array<std::size_t, 3> counts, std::array<double, 3> alphas) {
    ClassWeights cw;
    cw.counts = counts;
    cw.alphas = alphas;
    const double total = static_cast<double>(counts[0] + counts[1] + counts[2]);
    for (std::size_t c = 0; c < 3; ++c) {
        if (counts[c] == 0) {
            throw ConfigError("class weights: no " + std::string(to_string(class_from_index(static_cast<int>(c)))) +
                              " patches in the training split");
        }
        if (!(alphas[c] > 0.0)) throw ConfigError("class weights: alphas must be positive");
        cw.weights[c] = alphas[c] * (total / static_cast<double>(counts[c]));
    }
    return cw;
}

ClassWeights fold_class_weights(std::array<std::size_t, 3> counts, std::array<double, 3> alphas) {
    ClassWeights cw;
    cw.counts = counts;
    cw.alphas = alphas;
    const double total = static_cast<double>(counts[0] + counts[1] + counts[2]);
    if (total == 0.0) throw ConfigError("class weights: empty training split");
    for (std::size_t c = 0; c < 3; ++c) {
        if (!(alphas[c] > 0.0)) throw ConfigError("class weights: alphas must be positive");
        cw.weights[c] = counts[c] ? alphas[c] * (total / static_cast<double>(counts[c])) : alphas[c];
    }
    return cw;
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (!(momentum > 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must lie in (0, 1)");
    if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
    if (epochs < 1) throw ConfigError("train: epochs must be positive");
    if (eval_every < 1) throw ConfigError("train: eval_every must be positive");
    for (double a : alphas) {
        if (!(a > 0.0)) throw ConfigError("train: alphas must be positive");
    }
    augmentation.validate();
}

nlohmann::json TrainConfig::to_json() const {
    const auto& a = augmentation;
    return {{"lr", lr},
            {"momentum", momentum},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"seed", seed},
            {"augment", augment},
            {"eval_every", eval_every},
            {"alphas", alphas},
            {"augmentation",
             {{"rotation_deg", a.rotation_deg},
              {"flip_h", a.flip_h},
              {"flip_v", a.flip_v},
              {"rrc_scale", {a.rrc_scale_min, a.rrc_scale_max}},
              {"blur_kernel", a.blur_kernel},
              {"blur_sigma", a.blur_sigma},
              {"crop_pad", a.crop_pad},
              {"apply_prob", a.apply_prob},
              {"seed", a.seed}}}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.lr = j.at("lr").get<double>();
        c.momentum = j.at("momentum").get<double>();
        c.batch_size = j.at("batch_size").get<int>();
        c.epochs = j.at("epochs").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.augment = j.at("augment").get<bool>();
        c.eval_every = j.at("eval_every").get<int>();
        c.alphas = j.at("alphas").get<std::array<double, 3>>();
        const auto& a = j.at("augmentation");
        c.augmentation.rotation_deg = a.at("rotation_deg").get<double>();
        c.augmentation.flip_h = a.at("flip_h").get<bool>();
        c.augmentation.flip_v = a.at("flip_v").get<bool>();
        c.augmentation.rrc_scale_min = a.at("rrc_scale").at(0).get<double>();
        c.augmentation.rrc_scale_max = a.at("rrc_scale").at(1).get<double>();
        c.augmentation.blur_kernel = a.at("blur_kernel").get<int>();
        c.augmentation.blur_sigma = a.at("blur_sigma").get<double>();
        c.augmentation.crop_pad = a.at("crop_pad").get<int>();
        c.augmentation.apply_prob = a.at("apply_prob").get<double>();
        c.augmentation.seed = a.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

std::vector<std::vector<std::size_t>> epoch_schedule(std::size_t n, std::size_t batch_size, std::uint64_t seed, int epoch) {
    if (n == 0) throw UsageError("epoch_schedule: no samples");
    if (batch_size == 0) throw UsageError("epoch_schedule: batch size must be positive");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(mix_seed(seed, 0x5eed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                             perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
    }
    return batches;
}

nlohmann::json to_json(const EpochRecord& r) {
    nlohmann::json j{{"fold", r.fold}, {"epoch", r.epoch}, {"train_loss", r.train_loss}};
    j["val_accuracy"] = r.val_accuracy ? nlohmann::json(*r.val_accuracy) : nlohmann::json(nullptr);
    return j;
}

std::optional<std::size_t> select_best_epoch(std::span<const EpochRecord> history) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (!history[i].val_accuracy) continue;
        if (!best || *history[i].val_accuracy > *history[*best].val_accuracy) best = i;
    }
    return best;
}

void check_disjoint_paintings(std::span<const PatchRecord> train, std::span<const PatchRecord> heldout) {
    std::set<std::string> train_ids;
    for (const PatchRecord& p : train) train_ids.insert(p.painting_id);
    for (const PatchRecord& p : heldout) {
        if (train_ids.count(p.painting_id)) {
            throw LeakageError("painting '" + p.painting_id + "' appears in both the training and held-out splits");
        }
    }
}

std::vector<float> prepare_input(std::span<const float> pixels, int patch_size, int input_size) {
    return resize_area(pixels, patch_size, input_size);
}

Tensor make_batch(std::span<const std::vector<float>> inputs, int input_size) {
    const auto s = static_cast<std::size_t>(input_size);
    Tensor batch({inputs.size(), 1, s, s});
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].size() != s * s) throw ShapeError("make_batch: input is not " + std::to_string(s) + "x" + std::to_string(s));
        std::copy(inputs[i].begin(), inputs[i].end(), batch.ptr() + i * s * s);
    }
    return batch;
}

ClassLabel argmax_class(const std::array<double, 3>& posterior) {
    return class_from_index(static_cast<int>(std::max_element(posterior.begin(), posterior.end()) - posterior.begin()));
}

std::vector<std::array<double, 3>> predict_posteriors(Network& net, std::span<const PatchRecord> patches, std::size_t batch_size) {
    const int s = net.config().input_size;
    std::vector<std::array<double, 3>> out;
    out.reserve(patches.size());
    for (std::size_t start = 0; start < patches.size(); start += batch_size) {
        const std::size_t end = std::min(patches.size(), start + batch_size);
        std::vector<std::vector<float>> inputs;
        for (std::size_t i = start; i < end; ++i) inputs.push_back(prepare_input(patches[i].pixels, patches[i].size, s));
        const Tensor probs = softmax_rows(net.predict_logits(make_batch(inputs, s)));
        for (std::size_t i = 0; i < end - start; ++i) out.push_back({probs[i * 3], probs[i * 3 + 1], probs[i * 3 + 2]});
    }
    return out;
}

namespace {

double accuracy_of(Network& net, std::span<const std::vector<float>> inputs, std::span<const ClassLabel> labels) {
    const int s = net.config().input_size;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < inputs.size(); start += 64) {
        const std::size_t end = std::min(inputs.size(), start + 64);
        const Tensor logits = net.predict_logits(make_batch(inputs.subspan(start, end - start), s));
        for (std::size_t i = 0; i < end - start; ++i) {
            const double* row = logits.ptr() + i * 3;
            const int pred = static_cast<int>(std::max_element(row, row + 3) - row);
            if (pred == index_of(labels[start + i])) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(inputs.size());
}

Checkpoint snapshot(const Network& net, int epoch, double val_accuracy, int fold_id) {
    Checkpoint c;
    c.parameters = net.state_dict();
    for (NamedTensor& nt : c.parameters) round_to_f32(nt.tensor);
    c.epoch = epoch;
    c.val_accuracy = val_accuracy;
    c.fold_id = fold_id;
    return c;
}

}  // namespace

Network network_from_checkpoint(const ModelConfig& config, const Checkpoint& ckpt) {
    Network net(config);
    net.load_state_dict(ckpt.parameters);
    return net;
}

std::vector<Tensor> recalibration_batches(std::span<const std::vector<float>> inputs, int batch_size, int input_size) {
    std::vector<Tensor> out;
    const std::size_t bs = static_cast<std::size_t>(batch_size);
    for (std::size_t start = 0; start < inputs.size(); start += bs) {
        std::size_t end = std::min(inputs.size(), start + bs);
        // Fold a trailing singleton into this batch.
        if (inputs.size() - end == 1) end = inputs.size();
        out.push_back(make_batch(std::span(inputs).subspan(start, end - start), input_size));
        if (end == inputs.size()) break;
    }
    return out;
}

TrainResult train_with_weights(std::span<const PatchRecord> train, std::span<const PatchRecord> heldout,
                               const ModelConfig& model_config, const TrainConfig& cfg,
                               const std::array<double, 3>& class_weights, int fold_id, const EpochCallback& on_epoch) {
    cfg.validate();
    const auto diverged = [fold_id](int epoch, const std::string& where, const NumericError& e) {
        return DivergenceError("training diverged at epoch " + std::to_string(epoch) + where + " (fold " +
                               std::to_string(fold_id) + "): " + e.what());
    };
    model_config.validate();
    if (train.empty()) throw UsageError("training split is empty");
    check_disjoint_paintings(train, heldout);
    for (const PatchRecord& p : train) {
        if (!p.label) throw UsageError("unlabeled training patch from " + p.painting_id);
    }
    for (const PatchRecord& p : heldout) {
        if (!p.label) throw UsageError("unlabeled held-out patch from " + p.painting_id);
    }
    if (train.size() < 2) throw ConfigError("training needs at least 2 patches (batch normalization)");

    const int s = model_config.input_size;
    std::vector<std::vector<float>> held_inputs;
    std::vector<ClassLabel> held_labels;
    for (const PatchRecord& p : heldout) {
        held_inputs.push_back(prepare_input(p.pixels, p.size, s));
        held_labels.push_back(*p.label);
    }
    std::vector<std::vector<float>> plain_inputs;
    for (const PatchRecord& p : train) plain_inputs.push_back(prepare_input(p.pixels, p.size, s));
    const std::vector<Tensor> norm_batches = recalibration_batches(plain_inputs, cfg.batch_size, s);

    Network net(model_config);
    SgdMomentum opt(net.parameters(), cfg.lr, cfg.momentum);
    const std::uint64_t aug_seed = mix_seed(cfg.seed, cfg.augmentation.seed);

    TrainResult result;
    result.weights.weights = class_weights;
    result.weights.alphas = cfg.alphas;
    bool have_best = false;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto batches = epoch_schedule(train.size(), static_cast<std::size_t>(cfg.batch_size), cfg.seed, epoch);
        // Batch normalization cannot train on a single sample.
        if (batches.size() > 1 && batches.back().size() == 1) {
            batches[batches.size() - 2].push_back(batches.back().front());
            batches.pop_back();
        }
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            std::vector<std::vector<float>> inputs;
            std::vector<int> targets;
            for (std::size_t idx : batches[b]) {
                const PatchRecord& p = train[idx];
                if (cfg.augment) {
                    Rng rng(mix_seed(patch_stream_seed(aug_seed, p.painting_id, p.x, p.y), static_cast<std::uint64_t>(epoch)));
                    inputs.push_back(prepare_input(augment(p.pixels, p.size, cfg.augmentation, rng), p.size, s));
                } else {
                    inputs.push_back(plain_inputs[idx]);
                }
                targets.push_back(index_of(*p.label));
            }
            Rng dropout_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0xd0 + b));
            double loss_value = 0.0;
            try {
                Var logits = net.forward(make_batch(inputs, s), Mode::Train, dropout_rng);
                Var loss = ops::weighted_cross_entropy(logits, targets, class_weights);
                loss_value = loss.value()[0];
                opt.zero_grad();
                backward(loss);
                opt.step();
            } catch (const NumericError& e) {
                throw diverged(epoch, ", batch " + std::to_string(b + 1), e);
            }
            loss_sum += loss_value * static_cast<double>(batches[b].size());
            seen += batches[b].size();
        }

        EpochRecord rec;
        rec.fold = fold_id;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        const bool evaluate = !heldout.empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
        const bool recalibrate = evaluate || epoch == cfg.epochs;
        try {
            if (recalibrate) net.recalibrate_norms(norm_batches);
        } catch (const NumericError& e) {
            throw diverged(epoch, "", e);
        }
        if (evaluate) {
            // Evaluate exactly what a saved checkpoint would reproduce.
            Checkpoint snap = snapshot(net, epoch, 0.0, fold_id);
            Network eval_net = network_from_checkpoint(model_config, snap);
            try {
                snap.val_accuracy = accuracy_of(eval_net, held_inputs, held_labels);
            } catch (const NumericError& e) {
                throw diverged(epoch, "", e);
            }
            rec.val_accuracy = snap.val_accuracy;
            result.final_val_accuracy = snap.val_accuracy;
            if (!have_best || snap.val_accuracy > result.best.val_accuracy) {
                result.best = std::move(snap);
                have_best = true;
            }
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    result.final_epoch = cfg.epochs;
    result.final_state = snapshot(net, cfg.epochs, result.final_val_accuracy.value_or(0.0), fold_id);
    if (!have_best) result.best = result.final_state;
    return result;
}

TrainResult train_fold(std::span<const PatchRecord> train, std::span<const PatchRecord> heldout,
                       const ModelConfig& model_config, const TrainConfig& train_config, int fold_id,
                       const EpochCallback& on_epoch) {
    if (heldout.empty()) throw UsageError("held-out set is empty");
    check_disjoint_paintings(train, heldout);
    std::array<std::size_t, 3> counts{};
    for (const PatchRecord& p : train) {
        if (!p.label) throw UsageError("unlabeled training patch from " + p.painting_id);
        ++counts[static_cast<std::size_t>(index_of(*p.label))];
    }
    const ClassWeights cw = fold_class_weights(counts, train_config.alphas);
    TrainResult r = train_with_weights(train, heldout, model_config, train_config, cw.weights, fold_id, on_epoch);
    r.weights = cw;
    return r;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const Checkpoint& ckpt) {
    CheckpointFile f;
    f.header.config_digest = config.digest();
    f.header.epoch = static_cast<std::uint32_t>(ckpt.epoch);
    f.header.fold_id = ckpt.fold_id;
    f.header.val_accuracy = ckpt.val_accuracy;
    f.header.config_json = config.to_json().dump();
    f.tensors = ckpt.parameters;
    write_checkpoint(path, f);
}

std::pair<ModelConfig, Checkpoint> load_checkpoint(const std::filesystem::path& path) {
    CheckpointFile f = read_checkpoint(path);
    ModelConfig config;
    try {
        config = ModelConfig::from_json(nlohmann::json::parse(f.header.config_json));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint config is not valid JSON: " + std::string(e.what()));
    }
    if (config.digest() != f.header.config_digest) throw FormatError("checkpoint config digest mismatch: " + path.string());
    Checkpoint c;
    c.parameters = std::move(f.tensors);
    c.epoch = static_cast<int>(f.header.epoch);
    c.fold_id = f.header.fold_id;
    c.val_accuracy = f.header.val_accuracy;
    return {config, c};
}

}  // namespace brushtrace
