#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "brushtrace/model.h"
#include "gradcheck.h"
#include "replay.h"

namespace brushtrace::testing {

inline constexpr double kGradientTolerance = 1e-4;
inline constexpr std::array<std::uint64_t, 5> kGradientSeeds{1, 2, 3, 4, 5};

// Inputs kept away from ReLU and max-pool kinks so central differences with
// step 1e-5 never straddle one.
inline Tensor kink_free_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const double mag = 0.05 + 0.01 * static_cast<double>(i % 97) + 0.001 * rng.uniform();
        t[i] = rng.bernoulli(0.5) ? mag : -mag;
    }
    return t;
}

struct PrimitiveCase {
    std::string name;
    std::function<double(std::uint64_t seed)> error;
};

inline const std::vector<PrimitiveCase>& primitive_cases() {
    static const std::vector<PrimitiveCase> cases{
        {"conv2d_same",
         [](std::uint64_t s) {
             Rng rng(s);
             const GraphFn f = [](const std::vector<Var>& v) { return ops::conv2d(v[0], v[1], v[2], 1); };
             return gradient_error(
                 f, {random_tensor({2, 3, 5, 4}, rng), random_tensor({2, 3, 3, 3}, rng), random_tensor({2}, rng)}, s);
         }},
        {"conv2d_valid",
         [](std::uint64_t s) {
             Rng rng(s + 100);
             const GraphFn f = [](const std::vector<Var>& v) { return ops::conv2d(v[0], v[1], v[2], 0); };
             return gradient_error(
                 f, {random_tensor({1, 2, 5, 6}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)}, s);
         }},
        {"maxpool2",
         [](std::uint64_t s) {
             Rng rng(s + 200);
             const GraphFn f = [](const std::vector<Var>& v) { return ops::maxpool2(v[0]); };
             return gradient_error(f, {kink_free_tensor({2, 2, 5, 6}, rng)}, s);
         }},
        {"batchnorm_train",
         [](std::uint64_t s) {
             Rng rng(s + 300);
             const GraphFn f = [](const std::vector<Var>& v) {
                 BatchNormState st;
                 return ops::batchnorm(v[0], v[1], v[2], st, Mode::Train);
             };
             return gradient_error(
                 f, {random_tensor({3, 2, 3, 3}, rng), random_tensor({2}, rng, 0.5, 1.5), random_tensor({2}, rng)}, s);
         }},
        {"batchnorm_eval",
         [](std::uint64_t s) {
             Rng rng(s + 400);
             BatchNormState st{random_tensor({2}, rng), random_tensor({2}, rng, 0.5, 2.0)};
             const GraphFn f = [st](const std::vector<Var>& v) {
                 BatchNormState copy = st;
                 return ops::batchnorm(v[0], v[1], v[2], copy, Mode::Eval);
             };
             return gradient_error(f, {random_tensor({2, 2, 3, 3}, rng), random_tensor({2}, rng), random_tensor({2}, rng)},
                                   s);
         }},
        {"relu",
         [](std::uint64_t s) {
             Rng rng(s + 500);
             const GraphFn f = [](const std::vector<Var>& v) { return ops::relu(v[0]); };
             return gradient_error(f, {kink_free_tensor({2, 3, 4}, rng)}, s);
         }},
        {"dropout_train",
         [](std::uint64_t s) {
             Rng rng(s + 600);
             const GraphFn f = [s](const std::vector<Var>& v) {
                 Rng r(s);
                 return ops::dropout(v[0], 0.4, r, Mode::Train);
             };
             return gradient_error(f, {random_tensor({2, 3, 4, 4}, rng)}, s);
         }},
        {"global_avg_pool",
         [](std::uint64_t s) {
             Rng rng(s + 700);
             const GraphFn f = [](const std::vector<Var>& v) { return ops::global_avg_pool(v[0]); };
             return gradient_error(f, {random_tensor({2, 3, 3, 4}, rng)}, s);
         }},
        {"linear",
         [](std::uint64_t s) {
             Rng rng(s + 800);
             const GraphFn f = [](const std::vector<Var>& v) { return ops::linear(v[0], v[1], v[2]); };
             return gradient_error(f, {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng), random_tensor({4}, rng)},
                                   s);
         }},
        {"weighted_cross_entropy",
         [](std::uint64_t s) {
             Rng rng(s + 900);
             const GraphFn f = [](const std::vector<Var>& v) {
                 static const std::vector<int> targets{0, 2, 1, 1};
                 return ops::weighted_cross_entropy(v[0], targets, std::array<double, 3>{0.07803, 2.2747, 1.7352});
             };
             return gradient_error(f, {random_tensor({4, 3}, rng, -3, 3)}, s);
         }},
    };
    return cases;
}

struct NetworkCheck {
    double worst = 0.0;
    std::size_t checked = 0;
    std::size_t straddled = 0;
};

// Loss gradients of the tiny network against central differences. Entries
// are sampled per parameter tensor so every conv, norm and dense weight and
// bias is covered. A probe whose +-h interval flips a ReLU sign or a max-pool
// winner measures a non-differentiable secant and is skipped; such probes
// must stay rare.
inline NetworkCheck tiny_network_check(std::uint64_t seed, std::size_t per_tensor = 24) {
    ModelConfig cfg = ModelConfig::tiny();
    cfg.seed = seed;
    Network net(cfg);
    Rng rng(seed + 1000);
    const Tensor batch = random_tensor({2, 1, 32, 32}, rng, 0.0, 1.0);
    const std::vector<int> targets{1, 2};
    const std::array<double, 3> w{0.07803, 2.2747, 1.7352};
    const auto loss = [&](KinkPattern* kinks) {
        Rng dropout_rng(seed);
        return ops::weighted_cross_entropy(replay_forward(net, batch, Mode::Train, dropout_rng, kinks), targets, w);
    };

    std::vector<Var> params = net.parameters();
    {
        Rng dropout_rng(seed);
        backward(ops::weighted_cross_entropy(net.forward(batch, Mode::Train, dropout_rng), targets, w));
    }
    KinkPattern base;
    loss(&base);

    const double h = kFiniteDifferenceStep;
    NetworkCheck out;
    for (Var& p : params) {
        std::vector<std::size_t> idx(p.value().numel());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        const std::size_t take = std::min(idx.size(), per_tensor);
        for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
        std::vector<double> analytic, numeric;
        for (std::size_t k = 0; k < take; ++k) {
            const std::size_t i = idx[k];
            const double x0 = p.value()[i];
            KinkPattern kp, km;
            p.mutable_value()[i] = x0 + h;
            const double up = loss(&kp).value()[0];
            p.mutable_value()[i] = x0 - h;
            const double down = loss(&km).value()[0];
            p.mutable_value()[i] = x0;
            if (!(kp == base) || !(km == base)) {
                ++out.straddled;
                continue;
            }
            ++out.checked;
            numeric.push_back((up - down) / (2.0 * h));
            analytic.push_back(p.grad()[i]);
        }
        out.worst = std::max(out.worst, normalized_error(analytic, numeric));
    }
    return out;
}

// Bounds on skipped and checked probes for tiny_network_check at 24 entries
// per tensor (355 probes in total).
inline constexpr std::size_t kMaxStraddled = 3;
inline constexpr std::size_t kMinChecked = 350;

}  // namespace brushtrace::testing
