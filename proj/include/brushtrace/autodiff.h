#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "brushtrace/rng.h"
#include "brushtrace/tensor.h"

namespace brushtrace {

enum class Mode { Train, Eval };

namespace detail {
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Receives this node's output gradient and accumulates into parents.
    std::function<void(const Tensor&)> backward;

    void accumulate(const Tensor& g);
    Tensor& grad_buffer();
};
}  // namespace detail

// Handle to a value in the reverse-mode graph. Copies share the node.
class Var {
  public:
    Var() = default;

    static Var constant(Tensor value);
    static Var parameter(Tensor value);

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    // Zero-filled when no gradient has been accumulated yet.
    const Tensor& grad() const;
    void zero_grad();

    bool valid() const { return static_cast<bool>(node_); }
    const std::shared_ptr<detail::Node>& node() const { return node_; }

  private:
    friend Var make_result(Tensor value, std::vector<Var> parents,
                           std::function<void(const Tensor&, std::span<detail::Node* const>)> backward);
    std::shared_ptr<detail::Node> node_;
};

// Builds an interior node. `backward` receives the output gradient and the
// parent nodes (in the order given) so it can accumulate into them.
Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(const Tensor&, std::span<detail::Node* const>)> backward);

// Runs reverse-mode accumulation from `root`. The scalar overload seeds
// with 1; the general overload seeds with `seed` (same shape as root).
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;
};

namespace ops {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// 3x3 cross-correlation, stride 1. input [N,C,H,W], kernel [F,C,3,3], bias [F].
Var conv2d(const Var& input, const Var& kernel, const Var& bias, int pad);

// 2x2 window, stride 2, floor semantics. Ties route gradient to the first
// maximal element in row-major order.
Var maxpool2(const Var& input);

// Per-channel batch normalization. Train mode uses batch statistics and
// updates `state` with an exponential moving average (unbiased variance);
// eval mode uses the running statistics.
Var batchnorm(const Var& input, const Var& gamma, const Var& beta, BatchNormState& state, Mode mode,
              double eps = kBatchNormEps, double momentum = kBatchNormMomentum);

Var relu(const Var& input);

// Inverted dropout. Eval mode and p == 0 are the identity and draw nothing.
Var dropout(const Var& input, double p, Rng& rng, Mode mode);

// [N,C,H,W] -> [N,C]
Var global_avg_pool(const Var& input);

// input [N,in], weight [out,in], bias [out] -> [N,out]
Var linear(const Var& input, const Var& weight, const Var& bias);

// Weighted mean of per-sample negative log-softmax, normalized by the sum of
// the weights of the samples' target classes. Returns a [1] tensor.
Var weighted_cross_entropy(const Var& logits, std::span<const int> targets, std::span<const double> class_weights);

}  // namespace ops

// Row-wise softmax of a [N,K] tensor.
Tensor softmax_rows(const Tensor& logits);

}  // namespace brushtrace
