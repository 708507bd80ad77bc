#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "nfa/network.hpp"
#include "nfa/rng.hpp"
#include "nfa/targets.hpp"

namespace nfa {

enum class OptimizerKind { gd, sgd, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::gd;
    double learning_rate = 1e-4;
    double weight_decay = 0.0;
    double momentum = 0.0;  // 0 disables
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 64;  // ignored for gd

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
    }
};

/// Two-phase schedule: main_epochs at the base rate, then extra_epochs at
/// rate / drop_factor. Monitors fire every record_every epochs.
struct Schedule {
    std::size_t main_epochs = 5000;
    double drop_factor = 10.0;
    std::size_t extra_epochs = 100;
    std::size_t record_every = 25;

    void validate() const {
        if (main_epochs < 1) throw ConfigError("main_epochs must be >= 1");
        if (!(drop_factor > 0.0)) throw ConfigError("drop_factor must be positive");
        if (record_every < 1) throw ConfigError("record_every must be >= 1");
    }
    std::size_t total_epochs() const { return main_epochs + extra_epochs; }
};

struct TrainState {
    Network net;
    GradientSet momentum_buffer;
    GradientSet adam_m;
    GradientSet adam_v;
    std::size_t epoch = 0;
    std::size_t adam_steps = 0;

    explicit TrainState(Network n)
        : net(std::move(n)),
          momentum_buffer(GradientSet::zeros_like(net)),
          adam_m(GradientSet::zeros_like(net)),
          adam_v(GradientSet::zeros_like(net)) {}
};

namespace detail {

/// Visits every parameter block of a network together with the matching
/// block of up to three gradient-shaped buffers. `decay` marks blocks the
/// weight-decay penalty applies to: all weight matrices plus the readout
/// vector a, never biases.
template <typename Fn>
void for_each_param(Network& net, GradientSet& g0, GradientSet& g1, GradientSet& g2,
                    Fn&& fn) {
    for (std::size_t l = 0; l < net.stack.weights.size(); ++l) {
        auto w = net.stack.weights[l].flat();
        fn(w.data(), g0.weights[l].flat().data(), g1.weights[l].flat().data(),
           g2.weights[l].flat().data(), w.size(), true);
    }
    if (net.stack.bias1)
        fn(net.stack.bias1->data(), g0.bias1->data(), g1.bias1->data(), g2.bias1->data(),
           net.stack.bias1->size(), false);
    if (!net.head_a.empty())
        fn(net.head_a.data(), g0.head_a.data(), g1.head_a.data(), g2.head_a.data(),
           net.head_a.size(), true);
    if (net.head != HeadKind::none)
        fn(&net.head_b2, &g0.head_b2, &g1.head_b2, &g2.head_b2, std::size_t{1}, false);
    for (std::size_t l = 0; l < net.layer_biases.size(); ++l)
        fn(net.layer_biases[l].data(), g0.layer_biases[l].data(),
           g1.layer_biases[l].data(), g2.layer_biases[l].data(),
           net.layer_biases[l].size(), false);
}

inline bool params_finite(const Network& net) {
    for (const Matrix& w : net.stack.weights)
        if (!w.all_finite()) return false;
    auto vec_ok = [](const Vec& v) {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    };
    if (net.stack.bias1 && !vec_ok(*net.stack.bias1)) return false;
    if (!vec_ok(net.head_a)) return false;
    if (!std::isfinite(net.head_b2)) return false;
    for (const Vec& b : net.layer_biases)
        if (!vec_ok(b)) return false;
    return true;
}

/// Cached data moments that make full-batch gradients of pure linear stacks
/// independent of the dataset size.
struct LinearMoments {
    Matrix mxx;  // (1/N) X^T X
    Matrix myx;  // (1/N) Y^T X
    Vec mx;
    Vec my;
    double myy = 0.0;
};

inline LinearMoments linear_moments(const Matrix& x, const Matrix& y) {
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    LinearMoments m;
    m.mxx = matmul_tn(x, x);
    m.mxx *= inv_n;
    m.myx = matmul_tn(y, x);
    m.myx *= inv_n;
    m.mx.assign(x.cols(), 0.0);
    m.my.assign(y.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) m.mx[j] += x(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j) m.my[j] += y(i, j);
    }
    for (double& v : m.mx) v *= inv_n;
    for (double& v : m.my) v *= inv_n;
    for (double v : y.flat()) m.myy += v * v;
    m.myy *= inv_n;
    return m;
}

inline double linear_loss_from_moments(const Network& net, const LinearMoments& m) {
    const Matrix p = end_to_end_jacobian(net.stack);
    const Matrix pm = matmul(p, m.mxx);
    double loss = m.myy;
    auto fp = p.flat();
    auto fpm = pm.flat();
    auto fmyx = m.myx.flat();
    for (std::size_t i = 0; i < fp.size(); ++i) loss += fp[i] * (fpm[i] - 2.0 * fmyx[i]);
    if (net.stack.bias1) {
        const Vec& b = *net.stack.bias1;
        const Vec pmx = matvec(p, m.mx);
        for (std::size_t i = 0; i < b.size(); ++i)
            loss += b[i] * (2.0 * pmx[i] + b[i] - 2.0 * m.my[i]);
    }
    return loss;
}

inline GradientSet linear_gradients_from_moments(const Network& net,
                                                 const LinearMoments& m) {
    const std::size_t depth = net.stack.depth();
    GradientSet grads = GradientSet::zeros_like(net);

    // prefix[l] = W_l ... W_1 (prefix[0] = I)
    std::vector<Matrix> prefix(depth + 1);
    prefix[0] = Matrix::identity(net.stack.input_dim());
    for (std::size_t l = 0; l < depth; ++l)
        prefix[l + 1] = matmul(net.stack.weights[l], prefix[l]);
    const Matrix& p = prefix[depth];

    Matrix grad_p = matmul(p, m.mxx);
    grad_p -= m.myx;
    if (net.stack.bias1) {
        const Vec& b = *net.stack.bias1;
        for (std::size_t i = 0; i < grad_p.rows(); ++i)
            for (std::size_t j = 0; j < grad_p.cols(); ++j)
                grad_p(i, j) += b[i] * m.mx[j];
    }
    grad_p *= 2.0;

    // suffix = W_L ... W_{l+1}, built downward.
    Matrix suffix = Matrix::identity(net.stack.output_dim());
    for (std::size_t l = depth; l-- > 0;) {
        const Matrix tail = matmul_nt(grad_p, prefix[l]);
        grads.weights[l] = matmul_tn(suffix, tail);
        suffix = matmul(suffix, net.stack.weights[l]);
    }
    if (grads.bias1) {
        const Vec pmx = matvec(p, m.mx);
        const Vec& b = *net.stack.bias1;
        for (std::size_t i = 0; i < b.size(); ++i)
            (*grads.bias1)[i] = 2.0 * (pmx[i] + b[i] - m.my[i]);
    }
    return grads;
}

}  // namespace detail

/// One optimizer update from an already-computed gradient. Weight decay is
/// coupled: lambda * W joins the gradient before momentum or Adam moments.
inline void apply_update(TrainState& state, const OptimizerConfig& cfg,
                         GradientSet& grads) {
    const double eta = cfg.learning_rate;
    const double lambda = cfg.weight_decay;
    if (cfg.kind == OptimizerKind::adam) {
        state.adam_steps += 1;
        const double b1 = cfg.adam_beta1;
        const double b2 = cfg.adam_beta2;
        const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.adam_steps));
        const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.adam_steps));
        detail::for_each_param(
            state.net, grads, state.adam_m, state.adam_v,
            [&](double* w, double* g, double* m, double* v, std::size_t n, bool decay) {
                for (std::size_t i = 0; i < n; ++i) {
                    const double gi = g[i] + (decay ? lambda * w[i] : 0.0);
                    m[i] = b1 * m[i] + (1.0 - b1) * gi;
                    v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                    const double mhat = m[i] / corr1;
                    const double vhat = v[i] / corr2;
                    w[i] -= eta * mhat / (std::sqrt(vhat) + cfg.adam_eps);
                }
            });
        return;
    }
    const double beta = cfg.momentum;
    detail::for_each_param(
        state.net, grads, state.momentum_buffer, state.adam_v,
        [&](double* w, double* g, double* buf, double*, std::size_t n, bool decay) {
            for (std::size_t i = 0; i < n; ++i) {
                const double gi = g[i] + (decay ? lambda * w[i] : 0.0);
                if (beta > 0.0) {
                    buf[i] = beta * buf[i] + gi;
                    w[i] -= eta * buf[i];
                } else {
                    w[i] -= eta * gi;
                }
            }
        });
}

/// One optimizer step on a batch given as matrices (row per sample).
inline void step(TrainState& state, const OptimizerConfig& cfg, const Matrix& x,
                 const Matrix& y) {
    GradientSet grads = parameter_gradients_batch(state.net, x, y);
    apply_update(state, cfg, grads);
}

inline void step(TrainState& state, const OptimizerConfig& cfg, const Dataset& batch) {
    step(state, cfg, batch.inputs, batch.targets);
}

struct RecordContext {
    std::size_t epoch = 0;
    double time = 0.0;  // accumulated epoch * learning-rate
    double loss = 0.0;
    const Network* net = nullptr;
};

using Monitor = std::function<void(const RecordContext&)>;

struct TrainResult {
    Network net;
    bool diverged = false;
    std::size_t epochs_completed = 0;
};

/// Runs the full schedule. Full-batch gd on pure linear stacks uses cached
/// data moments (identical gradients, dataset-size independent); every other
/// combination runs batched backprop. Deterministic given the rng.
inline TrainResult train(Network net, const Dataset& data, const OptimizerConfig& cfg,
                         const Schedule& sched, Rng& rng,
                         const std::vector<Monitor>& monitors = {}) {
    cfg.validate();
    sched.validate();
    net.validate();
    if (data.size() == 0) throw EmptyDatasetError("train: empty dataset");

    TrainState state(std::move(net));
    const bool linear_fast_path =
        cfg.kind == OptimizerKind::gd && state.net.head == HeadKind::none;

    detail::LinearMoments moments;
    if (linear_fast_path) moments = detail::linear_moments(data.inputs, data.targets);

    auto full_loss = [&]() {
        return linear_fast_path
                   ? detail::linear_loss_from_moments(state.net, moments)
                   : mse_loss_batch(state.net, data.inputs, data.targets);
    };

    double time = 0.0;
    auto fire = [&](std::size_t epoch, double loss) {
        RecordContext ctx{epoch, time, loss, &state.net};
        for (const Monitor& m : monitors) m(ctx);
    };

    fire(0, full_loss());

    const std::size_t n = data.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);

    bool diverged = false;
    const std::size_t total = sched.total_epochs();
    for (std::size_t epoch = 1; epoch <= total; ++epoch) {
        OptimizerConfig phase_cfg = cfg;
        if (epoch > sched.main_epochs) phase_cfg.learning_rate = cfg.learning_rate / sched.drop_factor;

        double epoch_loss = 0.0;
        if (cfg.kind == OptimizerKind::gd) {
            GradientSet grads =
                linear_fast_path
                    ? detail::linear_gradients_from_moments(state.net, moments)
                    : parameter_gradients_batch(state.net, data.inputs, data.targets);
            apply_update(state, phase_cfg, grads);
            epoch_loss = full_loss();
        } else {
            // Fresh permutation every epoch; every point visited once; the
            // final short batch is kept.
            for (std::size_t i = n; i > 1; --i) {
                const std::size_t j = static_cast<std::size_t>(rng.below(i));
                std::swap(perm[i - 1], perm[j]);
            }
            const std::size_t bs = std::min(phase_cfg.batch_size, n);
            for (std::size_t start = 0; start < n; start += bs) {
                const std::size_t stop = std::min(start + bs, n);
                Matrix bx(stop - start, data.inputs.cols());
                Matrix by(stop - start, data.targets.cols());
                for (std::size_t r = start; r < stop; ++r) {
                    const std::size_t src = perm[r];
                    for (std::size_t c = 0; c < bx.cols(); ++c)
                        bx(r - start, c) = data.inputs(src, c);
                    for (std::size_t c = 0; c < by.cols(); ++c)
                        by(r - start, c) = data.targets(src, c);
                }
                detail::BatchForward fw = detail::batch_forward(state.net, bx);
                GradientSet grads = detail::gradients_from_forward(state.net, fw, bx, by);
                for (std::size_t i = 0; i < fw.outputs.size(); ++i) {
                    const double d = fw.outputs.flat()[i] - by.flat()[i];
                    epoch_loss += d * d;
                }
                apply_update(state, phase_cfg, grads);
            }
            epoch_loss /= static_cast<double>(n);
        }
        time += phase_cfg.learning_rate;
        state.epoch = epoch;

        if (!std::isfinite(epoch_loss) || !detail::params_finite(state.net)) {
            diverged = true;
            RecordContext ctx{epoch, time, std::numeric_limits<double>::quiet_NaN(),
                              &state.net};
            for (const Monitor& m : monitors) m(ctx);
            break;
        }
        if (epoch % sched.record_every == 0 || epoch == total) fire(epoch, full_loss());
    }

    TrainResult result{std::move(state.net), diverged,
                       diverged ? state.epoch : total};
    return result;
}

}  // namespace nfa
