#include "brushtrace/model.h"

#include <cmath>

#include "brushtrace/errors.h"
#include "brushtrace/rng.h"

namespace brushtrace {

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.block_channels = {8, 16};
    c.input_size = 32;
    c.fc_dims = {32, 16};
    return c;
}

void ModelConfig::validate() const {
    if (block_channels.empty()) throw ConfigError("model: at least one convolutional block required");
    for (int ch : block_channels) {
        if (ch < 1) throw ConfigError("model: block channel counts must be positive");
    }
    for (int d : fc_dims) {
        if (d < 1) throw ConfigError("model: fully connected widths must be positive");
    }
    if (convs_per_block < 1) throw ConfigError("model: convs_per_block must be >= 1");
    if (num_classes != 3) throw ConfigError("model: num_classes must be 3 (blank, human, robot)");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("model: dropout_p must lie in [0, 1)");
    if (block_channels.size() >= 31 || input_size < (1 << block_channels.size())) {
        throw ConfigError("model: input_size " + std::to_string(input_size) + " too small for " +
                          std::to_string(block_channels.size()) + " pooling stages");
    }
}

nlohmann::json ModelConfig::to_json() const {
    return {{"block_channels", block_channels}, {"convs_per_block", convs_per_block}, {"input_size", input_size},
            {"dropout_p", dropout_p},           {"fc_dims", fc_dims},                 {"num_classes", num_classes},
            {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.block_channels = j.at("block_channels").get<std::vector<int>>();
        c.convs_per_block = j.at("convs_per_block").get<int>();
        c.input_size = j.at("input_size").get<int>();
        c.dropout_p = j.at("dropout_p").get<double>();
        c.fc_dims = j.at("fc_dims").get<std::vector<int>>();
        c.num_classes = j.at("num_classes").get<int>();
        c.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

std::uint64_t ModelConfig::digest() const { return hash_string(to_json().dump()); }

std::vector<int> spatial_chain(const ModelConfig& config) {
    config.validate();
    std::vector<int> chain{config.input_size};
    for (std::size_t b = 0; b < config.block_channels.size(); ++b) chain.push_back(chain.back() / 2);
    return chain;
}

std::int64_t count_params(const ModelConfig& config) {
    config.validate();
    std::int64_t total = 0;
    std::int64_t in = 1;
    for (int ch : config.block_channels) {
        for (int j = 0; j < config.convs_per_block; ++j) {
            total += in * ch * 9 + ch;  // conv
            total += 2 * ch;            // batch norm gamma, beta
            in = ch;
        }
    }
    for (int d : config.fc_dims) {
        total += in * d + d;
        in = d;
    }
    total += in * config.num_classes + config.num_classes;
    return total;
}

namespace {

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

Network::Network(const ModelConfig& config) : config_(config) {
    config_.validate();
    Rng rng(mix_seed(config_.seed, 0x1417));
    std::size_t in = 1;
    for (int ch_i : config_.block_channels) {
        const auto ch = static_cast<std::size_t>(ch_i);
        Block block;
        for (int j = 0; j < config_.convs_per_block; ++j) {
            block.convs.push_back({Var::parameter(kaiming_uniform({ch, in, 3, 3}, in * 9, rng)), Var::parameter(Tensor({ch}))});
            block.norms.push_back({Var::parameter(Tensor({ch}, 1.0)), Var::parameter(Tensor({ch})),
                                   BatchNormState{Tensor({ch}, 0.0), Tensor({ch}, 1.0)}});
            in = ch;
        }
        blocks_.push_back(std::move(block));
    }
    std::vector<int> widths = config_.fc_dims;
    widths.push_back(config_.num_classes);
    for (int w_i : widths) {
        const auto w = static_cast<std::size_t>(w_i);
        head_.push_back({Var::parameter(kaiming_uniform({w, in}, in, rng)), Var::parameter(Tensor({w}))});
        in = w;
    }
}

Var Network::forward(const Tensor& batch, Mode mode, Rng& rng, double norm_momentum) {
    const auto s = static_cast<std::size_t>(config_.input_size);
    if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != s || batch.dim(3) != s) {
        throw ShapeError("network expects [N,1," + std::to_string(s) + "," + std::to_string(s) + "], got " +
                         shape_string(batch.shape()));
    }
    Var x = Var::constant(batch);
    for (Block& block : blocks_) {
        for (std::size_t j = 0; j < block.convs.size(); ++j) {
            x = ops::conv2d(x, block.convs[j].weight, block.convs[j].bias, 1);
            x = ops::batchnorm(x, block.norms[j].gamma, block.norms[j].beta, block.norms[j].stats, mode,
                               ops::kBatchNormEps, norm_momentum);
            x = ops::relu(x);
        }
        x = ops::maxpool2(x);
    }
    x = ops::dropout(x, config_.dropout_p, rng, mode);
    x = ops::global_avg_pool(x);
    for (std::size_t i = 0; i < head_.size(); ++i) {
        x = ops::linear(x, head_[i].weight, head_[i].bias);
        if (i + 1 < head_.size()) x = ops::relu(x);
    }
    return x;
}

Tensor Network::predict_logits(const Tensor& batch) {
    Rng unused(0);
    return forward(batch, Mode::Eval, unused).value();
}

void Network::recalibrate_norms(std::span<const Tensor> batches) {
    if (batches.empty()) throw UsageError("recalibration needs at least one batch");
    for (Block& block : blocks_) {
        for (Norm& norm : block.norms) norm.stats = BatchNormState{};
    }
    Rng unused(0);
    for (std::size_t k = 0; k < batches.size(); ++k) {
        // Dropout follows every normalization layer, so its draws cannot
        // affect the statistics.
        forward(batches[k], Mode::Train, unused, 1.0 / static_cast<double>(k + 1));
    }
}

std::vector<Var> Network::parameters() const {
    std::vector<Var> out;
    for (const Block& b : blocks_) {
        for (std::size_t j = 0; j < b.convs.size(); ++j) {
            out.push_back(b.convs[j].weight);
            out.push_back(b.convs[j].bias);
            out.push_back(b.norms[j].gamma);
            out.push_back(b.norms[j].beta);
        }
    }
    for (const Dense& d : head_) {
        out.push_back(d.weight);
        out.push_back(d.bias);
    }
    return out;
}

std::vector<NamedTensor> Network::state_dict() const {
    std::vector<NamedTensor> out;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        for (std::size_t j = 0; j < blocks_[b].convs.size(); ++j) {
            const std::string p = "block" + std::to_string(b + 1) + ".conv" + std::to_string(j + 1);
            const std::string n = "block" + std::to_string(b + 1) + ".bn" + std::to_string(j + 1);
            out.push_back({p + ".weight", blocks_[b].convs[j].weight.value()});
            out.push_back({p + ".bias", blocks_[b].convs[j].bias.value()});
            out.push_back({n + ".gamma", blocks_[b].norms[j].gamma.value()});
            out.push_back({n + ".beta", blocks_[b].norms[j].beta.value()});
            out.push_back({n + ".running_mean", blocks_[b].norms[j].stats.running_mean});
            out.push_back({n + ".running_var", blocks_[b].norms[j].stats.running_var});
        }
    }
    for (std::size_t i = 0; i < head_.size(); ++i) {
        const std::string p = "fc" + std::to_string(i + 1);
        out.push_back({p + ".weight", head_[i].weight.value()});
        out.push_back({p + ".bias", head_[i].bias.value()});
    }
    return out;
}

void Network::load_state_dict(const std::vector<NamedTensor>& state) {
    std::vector<Tensor*> slots;
    for (Block& b : blocks_) {
        for (std::size_t j = 0; j < b.convs.size(); ++j) {
            slots.push_back(&b.convs[j].weight.mutable_value());
            slots.push_back(&b.convs[j].bias.mutable_value());
            slots.push_back(&b.norms[j].gamma.mutable_value());
            slots.push_back(&b.norms[j].beta.mutable_value());
            slots.push_back(&b.norms[j].stats.running_mean);
            slots.push_back(&b.norms[j].stats.running_var);
        }
    }
    for (Dense& d : head_) {
        slots.push_back(&d.weight.mutable_value());
        slots.push_back(&d.bias.mutable_value());
    }
    const auto expected = state_dict();
    if (state.size() != slots.size()) {
        throw FormatError("state dict has " + std::to_string(state.size()) + " tensors, network expects " +
                          std::to_string(slots.size()));
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (state[i].name != expected[i].name || state[i].tensor.shape() != expected[i].tensor.shape()) {
            throw FormatError("state dict entry " + std::to_string(i) + " '" + state[i].name + "' " +
                              shape_string(state[i].tensor.shape()) + " does not match '" + expected[i].name + "' " +
                              shape_string(expected[i].tensor.shape()));
        }
        *slots[i] = state[i].tensor;
    }
}

Network Network::clone() const {
    Network copy(config_);
    copy.load_state_dict(state_dict());
    return copy;
}

void Network::round_to_f32() {
    auto state = state_dict();
    for (NamedTensor& nt : state) brushtrace::round_to_f32(nt.tensor);
    load_state_dict(state);
}

}  // namespace brushtrace
