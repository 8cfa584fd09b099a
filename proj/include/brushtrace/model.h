#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "brushtrace/autodiff.h"
#include "brushtrace/checkpoint.h"

namespace brushtrace {

struct ModelConfig {
    std::vector<int> block_channels{32, 64, 128, 256, 512};
    int convs_per_block = 2;
    int input_size = 300;
    double dropout_p = 0.4;
    std::vector<int> fc_dims{512, 128};
    int num_classes = 3;
    std::uint64_t seed = 0;  // parameter initialization

    static ModelConfig paper() { return {}; }
    // Scaled-down variant used by tests and the synthetic corpus runs.
    static ModelConfig tiny();

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    // FNV-1a of the canonical JSON; recorded in checkpoint headers.
    std::uint64_t digest() const;
};

// Spatial size entering each block, then after the last pool:
// {input, after block 1, ..., after block k}.
std::vector<int> spatial_chain(const ModelConfig& config);

// Trainable parameters: conv weights and biases, batch-norm gamma and beta,
// fully connected weights and biases. Running statistics are not counted.
std::int64_t count_params(const ModelConfig& config);

// VGG-style network:
//   per block: (conv3x3 pad 1 -> batchnorm -> relu) x convs_per_block -> maxpool2
//   head: dropout -> global average pool -> fc -> relu -> ... -> fc(num_classes)
class Network {
  public:
    struct Conv {
        Var weight;
        Var bias;
    };
    struct Norm {
        Var gamma;
        Var beta;
        BatchNormState stats;
    };
    struct Dense {
        Var weight;
        Var bias;
    };
    struct Block {
        std::vector<Conv> convs;
        std::vector<Norm> norms;
    };

    // Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases,
    // gamma = 1, beta = 0. Deterministic in config.seed.
    explicit Network(const ModelConfig& config);

    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    const ModelConfig& config() const { return config_; }

    // batch: [N, 1, input_size, input_size] -> logits [N, num_classes].
    // Train mode draws dropout masks from `rng`; eval mode never touches it.
    // `norm_momentum` weights the batch statistics in the running averages.
    Var forward(const Tensor& batch, Mode mode, Rng& rng, double norm_momentum = ops::kBatchNormMomentum);
    Tensor predict_logits(const Tensor& batch);

    // Replaces the batch-norm running statistics with the equal-weight average
    // of the batch statistics over `batches` under the current weights.
    void recalibrate_norms(std::span<const Tensor> batches);

    std::vector<Var> parameters() const;
    // Parameters and batch-norm running statistics in declaration order.
    std::vector<NamedTensor> state_dict() const;
    void load_state_dict(const std::vector<NamedTensor>& state);
    Network clone() const;
    void round_to_f32();

    const std::vector<Block>& blocks() const { return blocks_; }
    std::vector<Block>& blocks() { return blocks_; }
    const std::vector<Dense>& head() const { return head_; }

  private:
    ModelConfig config_;
    std::vector<Block> blocks_;
    std::vector<Dense> head_;
};

}  // namespace brushtrace
