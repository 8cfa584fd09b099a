#include "brushtrace/autodiff.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "brushtrace/errors.h"

namespace brushtrace {

namespace detail {

Tensor& Node::grad_buffer() {
    if (grad.numel() != value.numel()) grad = Tensor(value.shape());
    return grad;
}

void Node::accumulate(const Tensor& g) {
    Tensor& buf = grad_buffer();
    auto dst = buf.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

namespace {

void require_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) throw NumericError(std::string("non-finite values produced by ") + op);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
    }
}

}  // namespace

Var Var::constant(Tensor value) {
    Var v;
    v.node_ = std::make_shared<detail::Node>();
    v.node_->value = std::move(value);
    return v;
}

Var Var::parameter(Tensor value) {
    Var v = constant(std::move(value));
    v.node_->requires_grad = true;
    return v;
}

const Tensor& Var::grad() const { return node_->grad_buffer(); }

void Var::zero_grad() {
    if (node_ && node_->grad.numel() > 0) node_->grad.fill(0.0);
}

Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(const Tensor&, std::span<detail::Node* const>)> backward_fn) {
    Var out;
    out.node_ = std::make_shared<detail::Node>();
    out.node_->value = std::move(value);
    const bool any = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
    if (!any) return out;

    out.node_->requires_grad = true;
    std::vector<detail::Node*> raw;
    for (const Var& p : parents) {
        out.node_->parents.push_back(p.node());
        raw.push_back(p.node().get());
    }
    out.node_->backward = [fn = std::move(backward_fn), raw = std::move(raw)](const Tensor& g) {
        fn(g, std::span<detail::Node* const>(raw));
    };
    return out;
}

void backward(const Var& root) {
    if (root.value().numel() != 1) throw ShapeError("backward() without a seed requires a scalar root");
    backward(root, Tensor(root.shape(), 1.0));
}

void backward(const Var& root, const Tensor& seed) {
    if (!root.requires_grad()) return;
    if (seed.shape() != root.shape()) throw ShapeError("backward seed shape mismatch");

    // Iterative post-order DFS for a topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior gradients are per-pass; leaves accumulate across passes.
    for (detail::Node* n : order) {
        if (n->backward) n->grad = Tensor();
    }
    root.node()->accumulate(seed);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (!n->backward) continue;
        n->backward(n->grad_buffer());
    }
    for (detail::Node* n : order) {
        if (n->grad.numel() > 0) require_finite(n->grad, "backward pass");
    }
}

Tensor softmax_rows(const Tensor& logits) {
    require_rank(logits, 2, "softmax");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.ptr() + i * k;
        double* p = out.ptr() + i * k;
        const double zmax = *std::max_element(z, z + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            p[j] = std::exp(z[j] - zmax);
            sum += p[j];
        }
        for (std::size_t j = 0; j < k; ++j) p[j] /= sum;
    }
    return out;
}

namespace ops {

namespace {

constexpr std::size_t kKernel = 3;

// cols[(c*9 + ky*3 + kx) * P + oy*outW + ox] = x[c, oy+ky-pad, ox+kx-pad]
void im2col(const double* x, std::size_t c_in, std::size_t h, std::size_t w, int pad, std::size_t out_h,
            std::size_t out_w, double* cols) {
    const std::size_t plane = out_h * out_w;
    for (std::size_t c = 0; c < c_in; ++c) {
        const double* xc = x + c * h * w;
        for (std::size_t ky = 0; ky < kKernel; ++ky) {
            for (std::size_t kx = 0; kx < kKernel; ++kx) {
                double* row = cols + ((c * kKernel + ky) * kKernel + kx) * plane;
                for (std::size_t oy = 0; oy < out_h; ++oy) {
                    const long iy = static_cast<long>(oy + ky) - pad;
                    double* dst = row + oy * out_w;
                    if (iy < 0 || iy >= static_cast<long>(h)) {
                        std::fill(dst, dst + out_w, 0.0);
                        continue;
                    }
                    const double* src = xc + static_cast<std::size_t>(iy) * w;
                    for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const long ix = static_cast<long>(ox + kx) - pad;
                        dst[ox] = (ix < 0 || ix >= static_cast<long>(w)) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, std::size_t c_in, std::size_t h, std::size_t w, int pad, std::size_t out_h,
                std::size_t out_w, double* dx) {
    const std::size_t plane = out_h * out_w;
    for (std::size_t c = 0; c < c_in; ++c) {
        double* dxc = dx + c * h * w;
        for (std::size_t ky = 0; ky < kKernel; ++ky) {
            for (std::size_t kx = 0; kx < kKernel; ++kx) {
                const double* row = cols + ((c * kKernel + ky) * kKernel + kx) * plane;
                for (std::size_t oy = 0; oy < out_h; ++oy) {
                    const long iy = static_cast<long>(oy + ky) - pad;
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    double* dst = dxc + static_cast<std::size_t>(iy) * w;
                    const double* src = row + oy * out_w;
                    for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const long ix = static_cast<long>(ox + kx) - pad;
                        if (ix >= 0 && ix < static_cast<long>(w)) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& input, const Var& kernel, const Var& bias, int pad) {
    const Tensor& x = input.value();
    const Tensor& k = kernel.value();
    const Tensor& b = bias.value();
    require_rank(x, 4, "conv2d input");
    require_rank(k, 4, "conv2d kernel");
    if (k.dim(2) != kKernel || k.dim(3) != kKernel) throw ShapeError("conv2d: kernel must be 3x3, got " + shape_string(k.shape()));
    if (k.dim(1) != x.dim(1)) {
        throw ShapeError("conv2d: input has " + std::to_string(x.dim(1)) + " channels but kernel expects " +
                         std::to_string(k.dim(1)));
    }
    if (b.rank() != 1 || b.dim(0) != k.dim(0)) throw ShapeError("conv2d: bias must be [" + std::to_string(k.dim(0)) + "]");
    if (pad != 0 && pad != 1) throw ConfigError("conv2d: pad must be 0 or 1");

    const std::size_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3), f = k.dim(0);
    if (h + 2 * pad < kKernel || w + 2 * pad < kKernel) throw ShapeError("conv2d: input smaller than kernel");
    const std::size_t out_h = h + 2 * pad - 2, out_w = w + 2 * pad - 2;
    const std::size_t plane = out_h * out_w, kdim = c_in * kKernel * kKernel;

    Tensor y({n, f, out_h, out_w});
    std::vector<double> cols(kdim * plane);
    for (std::size_t s = 0; s < n; ++s) {
        im2col(x.ptr() + s * c_in * h * w, c_in, h, w, pad, out_h, out_w, cols.data());
        for (std::size_t fo = 0; fo < f; ++fo) {
            double* out = y.ptr() + (s * f + fo) * plane;
            std::fill(out, out + plane, b[fo]);
            const double* wrow = k.ptr() + fo * kdim;
            for (std::size_t kk = 0; kk < kdim; ++kk) {
                const double wv = wrow[kk];
                const double* col = cols.data() + kk * plane;
                for (std::size_t p = 0; p < plane; ++p) out[p] += wv * col[p];
            }
        }
    }
    require_finite(y, "conv2d");

    return make_result(std::move(y), {input, kernel, bias},
                       [n, c_in, h, w, f, pad, out_h, out_w, plane, kdim](const Tensor& g,
                                                                           std::span<detail::Node* const> parents) {
                           detail::Node* in = parents[0];
                           detail::Node* ker = parents[1];
                           detail::Node* bi = parents[2];
                           const Tensor& xv = in->value;
                           const Tensor& kv = ker->value;
                           std::vector<double> cols(kdim * plane);
                           std::vector<double> dcols(in->requires_grad ? kdim * plane : 0);
                           double* dk = ker->requires_grad ? ker->grad_buffer().ptr() : nullptr;
                           double* db = bi->requires_grad ? bi->grad_buffer().ptr() : nullptr;
                           double* dx = in->requires_grad ? in->grad_buffer().ptr() : nullptr;
                           for (std::size_t s = 0; s < n; ++s) {
                               const double* gs = g.ptr() + s * f * plane;
                               if (dk) im2col(xv.ptr() + s * c_in * h * w, c_in, h, w, pad, out_h, out_w, cols.data());
                               if (dx) std::fill(dcols.begin(), dcols.end(), 0.0);
                               for (std::size_t fo = 0; fo < f; ++fo) {
                                   const double* grow = gs + fo * plane;
                                   if (db) {
                                       double acc = 0.0;
                                       for (std::size_t p = 0; p < plane; ++p) acc += grow[p];
                                       db[fo] += acc;
                                   }
                                   if (dk) {
                                       double* dkrow = dk + fo * kdim;
                                       for (std::size_t kk = 0; kk < kdim; ++kk) {
                                           const double* col = cols.data() + kk * plane;
                                           double acc = 0.0;
                                           for (std::size_t p = 0; p < plane; ++p) acc += grow[p] * col[p];
                                           dkrow[kk] += acc;
                                       }
                                   }
                                   if (dx) {
                                       const double* wrow = kv.ptr() + fo * kdim;
                                       for (std::size_t kk = 0; kk < kdim; ++kk) {
                                           const double wv = wrow[kk];
                                           double* dcol = dcols.data() + kk * plane;
                                           for (std::size_t p = 0; p < plane; ++p) dcol[p] += wv * grow[p];
                                       }
                                   }
                               }
                               if (dx) col2im_add(dcols.data(), c_in, h, w, pad, out_h, out_w, dx + s * c_in * h * w);
                           }
                       });
}

Var maxpool2(const Var& input) {
    const Tensor& x = input.value();
    require_rank(x, 4, "maxpool2");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h < 2 || w < 2) throw ShapeError("maxpool2: spatial size must be at least 2x2, got " + shape_string(x.shape()));
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor y({n, c, oh, ow});
    std::vector<std::size_t> argmax(y.numel());
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const double* xp = x.ptr() + plane * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
                std::size_t best = (2 * oy) * w + 2 * ox;
                const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
                for (std::size_t idx : cand) {
                    if (xp[idx] > xp[best]) best = idx;
                }
                y[o] = xp[best];
                argmax[o] = plane * h * w + best;
            }
        }
    }
    return make_result(std::move(y), {input},
                       [argmax = std::move(argmax)](const Tensor& g, std::span<detail::Node* const> parents) {
                           double* dx = parents[0]->grad_buffer().ptr();
                           for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += g[i];
                       });
}

Var batchnorm(const Var& input, const Var& gamma, const Var& beta, BatchNormState& state, Mode mode, double eps,
              double momentum) {
    const Tensor& x = input.value();
    require_rank(x, 4, "batchnorm");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (gamma.value().numel() != c || beta.value().numel() != c) throw ShapeError("batchnorm: gamma/beta must have one entry per channel");
    if (state.running_mean.numel() != c) state.running_mean = Tensor({c}, 0.0);
    if (state.running_var.numel() != c) state.running_var = Tensor({c}, 1.0);
    if (mode == Mode::Train && n < 2) throw ConfigError("batchnorm: train mode needs a batch of at least 2 samples");

    const double m = static_cast<double>(n * hw);
    std::vector<double> mean(c), invstd(c);
    if (mode == Mode::Train) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            double sum = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double* p = x.ptr() + (s * c + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) sum += p[i];
            }
            const double mu = sum / m;
            double sq = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double* p = x.ptr() + (s * c + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) sq += (p[i] - mu) * (p[i] - mu);
            }
            const double var = sq / m;
            mean[ch] = mu;
            invstd[ch] = 1.0 / std::sqrt(var + eps);
            state.running_mean[ch] = (1.0 - momentum) * state.running_mean[ch] + momentum * mu;
            state.running_var[ch] = (1.0 - momentum) * state.running_var[ch] + momentum * var * m / (m - 1.0);
        }
    } else {
        for (std::size_t ch = 0; ch < c; ++ch) {
            mean[ch] = state.running_mean[ch];
            invstd[ch] = 1.0 / std::sqrt(state.running_var[ch] + eps);
        }
    }

    Tensor xhat(x.shape());
    Tensor y(x.shape());
    const Tensor& gm = gamma.value();
    const Tensor& bt = beta.value();
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (s * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                const double xh = (x[off + i] - mean[ch]) * invstd[ch];
                xhat[off + i] = xh;
                y[off + i] = gm[ch] * xh + bt[ch];
            }
        }
    }
    require_finite(y, "batchnorm");

    const bool train = mode == Mode::Train;
    return make_result(std::move(y), {input, gamma, beta},
                       [xhat = std::move(xhat), invstd = std::move(invstd), n, c, hw, m, train](
                           const Tensor& g, std::span<detail::Node* const> parents) {
                           detail::Node* in = parents[0];
                           detail::Node* gnode = parents[1];
                           detail::Node* bnode = parents[2];
                           const Tensor& gm = gnode->value;
                           for (std::size_t ch = 0; ch < c; ++ch) {
                               double sum_g = 0.0, sum_gx = 0.0;
                               for (std::size_t s = 0; s < n; ++s) {
                                   const std::size_t off = (s * c + ch) * hw;
                                   for (std::size_t i = 0; i < hw; ++i) {
                                       sum_g += g[off + i];
                                       sum_gx += g[off + i] * xhat[off + i];
                                   }
                               }
                               if (gnode->requires_grad) gnode->grad_buffer()[ch] += sum_gx;
                               if (bnode->requires_grad) bnode->grad_buffer()[ch] += sum_g;
                               if (!in->requires_grad) continue;
                               double* dx = in->grad_buffer().ptr();
                               const double scale = gm[ch] * invstd[ch];
                               for (std::size_t s = 0; s < n; ++s) {
                                   const std::size_t off = (s * c + ch) * hw;
                                   for (std::size_t i = 0; i < hw; ++i) {
                                       if (train) {
                                           dx[off + i] += scale * (g[off + i] - sum_g / m - xhat[off + i] * sum_gx / m);
                                       } else {
                                           dx[off + i] += scale * g[off + i];
                                       }
                                   }
                               }
                           }
                       });
}

Var relu(const Var& input) {
    const Tensor& x = input.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return make_result(std::move(y), {input}, [](const Tensor& g, std::span<detail::Node* const> parents) {
        const Tensor& xv = parents[0]->value;
        double* dx = parents[0]->grad_buffer().ptr();
        for (std::size_t i = 0; i < g.numel(); ++i) {
            if (xv[i] > 0.0) dx[i] += g[i];
        }
    });
}

Var dropout(const Var& input, double p, Rng& rng, Mode mode) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: p must lie in [0, 1), got " + std::to_string(p));
    if (mode == Mode::Eval || p == 0.0) {
        return make_result(input.value(), {input}, [](const Tensor& g, std::span<detail::Node* const> parents) {
            parents[0]->accumulate(g);
        });
    }
    const Tensor& x = input.value();
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(x.numel());
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        mask[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
        y[i] = x[i] * mask[i];
    }
    return make_result(std::move(y), {input},
                       [mask = std::move(mask)](const Tensor& g, std::span<detail::Node* const> parents) {
                           double* dx = parents[0]->grad_buffer().ptr();
                           for (std::size_t i = 0; i < mask.size(); ++i) dx[i] += g[i] * mask[i];
                       });
}

Var global_avg_pool(const Var& input) {
    const Tensor& x = input.value();
    require_rank(x, 4, "global_avg_pool");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor y({n, c});
    for (std::size_t i = 0; i < n * c; ++i) {
        double sum = 0.0;
        const double* p = x.ptr() + i * hw;
        for (std::size_t j = 0; j < hw; ++j) sum += p[j];
        y[i] = sum / static_cast<double>(hw);
    }
    return make_result(std::move(y), {input}, [n, c, hw](const Tensor& g, std::span<detail::Node* const> parents) {
        double* dx = parents[0]->grad_buffer().ptr();
        const double inv = 1.0 / static_cast<double>(hw);
        for (std::size_t i = 0; i < n * c; ++i) {
            const double gi = g[i] * inv;
            double* p = dx + i * hw;
            for (std::size_t j = 0; j < hw; ++j) p[j] += gi;
        }
    });
}

Var linear(const Var& input, const Var& weight, const Var& bias) {
    const Tensor& x = input.value();
    const Tensor& wt = weight.value();
    require_rank(x, 2, "linear input");
    require_rank(wt, 2, "linear weight");
    const std::size_t n = x.dim(0), in = x.dim(1), out = wt.dim(0);
    if (wt.dim(1) != in) {
        throw ShapeError("linear: input width " + std::to_string(in) + " does not match weight " + shape_string(wt.shape()));
    }
    if (bias.value().numel() != out) throw ShapeError("linear: bias must be [" + std::to_string(out) + "]");
    Tensor y({n, out});
    for (std::size_t s = 0; s < n; ++s) {
        const double* xr = x.ptr() + s * in;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wr = wt.ptr() + o * in;
            double acc = bias.value()[o];
            for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
            y[s * out + o] = acc;
        }
    }
    require_finite(y, "linear");
    return make_result(std::move(y), {input, weight, bias},
                       [n, in, out](const Tensor& g, std::span<detail::Node* const> parents) {
                           detail::Node* xn = parents[0];
                           detail::Node* wn = parents[1];
                           detail::Node* bn = parents[2];
                           const Tensor& xv = xn->value;
                           const Tensor& wv = wn->value;
                           double* dx = xn->requires_grad ? xn->grad_buffer().ptr() : nullptr;
                           double* dw = wn->requires_grad ? wn->grad_buffer().ptr() : nullptr;
                           double* db = bn->requires_grad ? bn->grad_buffer().ptr() : nullptr;
                           for (std::size_t s = 0; s < n; ++s) {
                               const double* xr = xv.ptr() + s * in;
                               for (std::size_t o = 0; o < out; ++o) {
                                   const double go = g[s * out + o];
                                   if (db) db[o] += go;
                                   if (dw) {
                                       double* dwr = dw + o * in;
                                       for (std::size_t i = 0; i < in; ++i) dwr[i] += go * xr[i];
                                   }
                                   if (dx) {
                                       const double* wr = wv.ptr() + o * in;
                                       double* dxr = dx + s * in;
                                       for (std::size_t i = 0; i < in; ++i) dxr[i] += go * wr[i];
                                   }
                               }
                           }
                       });
}

Var weighted_cross_entropy(const Var& logits, std::span<const int> targets, std::span<const double> class_weights) {
    const Tensor& z = logits.value();
    require_rank(z, 2, "weighted_cross_entropy");
    const std::size_t n = z.dim(0), k = z.dim(1);
    if (targets.size() != n) throw ShapeError("weighted_cross_entropy: one target per row required");
    if (class_weights.size() != k) throw ShapeError("weighted_cross_entropy: one weight per class required");
    for (double wc : class_weights) {
        if (!(wc > 0.0) || !std::isfinite(wc)) throw ConfigError("weighted_cross_entropy: class weights must be positive");
    }
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= k) throw UsageError("weighted_cross_entropy: target out of range");
    }
    if (!z.all_finite()) throw NumericError("weighted_cross_entropy: non-finite logits");

    Tensor probs = softmax_rows(z);
    double total_w = 0.0, loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* zr = z.ptr() + i * k;
        const double zmax = *std::max_element(zr, zr + k);
        double se = 0.0;
        for (std::size_t j = 0; j < k; ++j) se += std::exp(zr[j] - zmax);
        const double nll = zmax + std::log(se) - zr[targets[i]];
        const double wi = class_weights[static_cast<std::size_t>(targets[i])];
        loss += wi * nll;
        total_w += wi;
    }
    loss /= total_w;
    if (!std::isfinite(loss)) throw NumericError("weighted_cross_entropy: non-finite loss");

    std::vector<int> tgt(targets.begin(), targets.end());
    std::vector<double> cw(class_weights.begin(), class_weights.end());
    return make_result(Tensor({1}, {loss}), {logits},
                       [probs = std::move(probs), tgt = std::move(tgt), cw = std::move(cw), total_w, n, k](
                           const Tensor& g, std::span<detail::Node* const> parents) {
                           double* dz = parents[0]->grad_buffer().ptr();
                           const double g0 = g[0];
                           for (std::size_t i = 0; i < n; ++i) {
                               const double scale = g0 * cw[static_cast<std::size_t>(tgt[i])] / total_w;
                               for (std::size_t j = 0; j < k; ++j) {
                                   const double onehot = static_cast<int>(j) == tgt[i] ? 1.0 : 0.0;
                                   dz[i * k + j] += scale * (probs[i * k + j] - onehot);
                               }
                           }
                       });
}

}  // namespace ops

}  // namespace brushtrace
