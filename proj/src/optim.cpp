#include "brushtrace/optim.h"

#include <string>

#include "brushtrace/errors.h"

namespace brushtrace {

void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, OptimizerState& state) {
    if (params.size() != grads.size()) throw ShapeError("sgd: parameter and gradient counts differ");
    if (!(state.lr > 0.0)) throw ConfigError("sgd: learning rate must be positive");
    if (!(state.momentum >= 0.0 && state.momentum < 1.0)) throw ConfigError("sgd: momentum must lie in [0, 1)");
    if (state.velocity.empty()) {
        for (const Tensor* p : params) state.velocity.emplace_back(p->shape());
    }
    if (state.velocity.size() != params.size()) throw ShapeError("sgd: velocity buffer count does not match parameters");

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        Tensor& v = state.velocity[i];
        if (g.shape() != p.shape() || v.shape() != p.shape()) {
            throw ShapeError("sgd: shape mismatch for parameter " + std::to_string(i) + " " + shape_string(p.shape()));
        }
        if (!g.all_finite()) throw NumericError("sgd: non-finite gradient for parameter " + std::to_string(i));
        for (std::size_t j = 0; j < p.numel(); ++j) {
            v[j] = state.momentum * v[j] + g[j];
            p[j] -= state.lr * v[j];
        }
    }
}

SgdMomentum::SgdMomentum(std::vector<Var> params, double lr, double momentum) : params_(std::move(params)) {
    state_.lr = lr;
    state_.momentum = momentum;
}

void SgdMomentum::zero_grad() {
    for (Var& p : params_) p.zero_grad();
}

void SgdMomentum::step() {
    std::vector<Tensor*> values;
    std::vector<const Tensor*> grads;
    for (Var& p : params_) {
        values.push_back(&p.mutable_value());
        grads.push_back(&p.grad());
    }
    sgd_momentum_step(values, grads, state_);
}

}  // namespace brushtrace
