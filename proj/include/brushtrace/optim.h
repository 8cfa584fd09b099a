#pragma once

#include <span>
#include <vector>

#include "brushtrace/autodiff.h"
#include "brushtrace/tensor.h"

namespace brushtrace {

struct OptimizerState {
    std::vector<Tensor> velocity;  // one buffer per parameter, same shape
    double lr = 1e-4;
    double momentum = 0.9;
};

// Heavy-ball momentum without dampening or Nesterov:
//   v <- momentum * v + g
//   p <- p - lr * v
// Velocity buffers are created on the first call if `state.velocity` is empty.
void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, OptimizerState& state);

class SgdMomentum {
  public:
    SgdMomentum(std::vector<Var> params, double lr, double momentum);

    void zero_grad();
    void step();

    const OptimizerState& state() const { return state_; }

  private:
    std::vector<Var> params_;
    OptimizerState state_;
};

}  // namespace brushtrace
