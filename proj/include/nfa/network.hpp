#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "nfa/linalg.hpp"
#include "nfa/matrix.hpp"

namespace nfa {

/// Ordered weight matrices W_1..W_L with an optional bias applied after the
/// last product: the linear feature extractor x -> W_L...W_1 x + b1.
struct LinearStack {
    std::vector<Matrix> weights;
    std::optional<Vec> bias1;

    std::size_t depth() const { return weights.size(); }
    std::size_t input_dim() const { return weights.front().cols(); }
    std::size_t output_dim() const { return weights.back().rows(); }

    void validate() const {
        if (weights.empty()) throw ShapeError("LinearStack: needs at least one layer");
        for (std::size_t l = 0; l + 1 < weights.size(); ++l)
            if (weights[l + 1].cols() != weights[l].rows())
                throw ShapeError("LinearStack: adjacent layer shapes do not conform");
        if (bias1 && bias1->size() != output_dim())
            throw ShapeError("LinearStack: bias length mismatch");
        for (const Matrix& w : weights)
            if (!w.all_finite()) throw ShapeError("LinearStack: non-finite entries");
    }
};

enum class HeadKind {
    none,         // multivariate linear output W_L...W_1 x (+ b1)
    relu_head,    // a^T [W_L...W_1 x + b1]_+ + b2
    feedforward,  // per-layer biases + ReLU after every hidden layer, scalar readout
};

/// Trained model: a linear stack plus one of three readout structures.
struct Network {
    LinearStack stack;
    HeadKind head = HeadKind::none;
    Vec head_a;                         // relu_head / feedforward readout weights
    double head_b2 = 0.0;               // scalar readout offset
    std::vector<Vec> layer_biases;      // feedforward only, one per layer

    std::size_t input_dim() const { return stack.input_dim(); }
    bool scalar_output() const { return head != HeadKind::none; }
    std::size_t output_dim() const {
        return scalar_output() ? 1 : stack.output_dim();
    }

    void validate() const {
        stack.validate();
        if (head == HeadKind::relu_head || head == HeadKind::feedforward) {
            if (head_a.size() != stack.output_dim())
                throw ShapeError("Network: head vector length mismatch");
        }
        if (head == HeadKind::feedforward) {
            if (layer_biases.size() != stack.depth())
                throw ShapeError("Network: one bias vector per layer expected");
            for (std::size_t l = 0; l < stack.depth(); ++l)
                if (layer_biases[l].size() != stack.weights[l].rows())
                    throw ShapeError("Network: layer bias length mismatch");
        }
    }
};

/// Gradients mirroring a Network's parameter shapes.
struct GradientSet {
    std::vector<Matrix> weights;
    std::optional<Vec> bias1;
    Vec head_a;
    double head_b2 = 0.0;
    std::vector<Vec> layer_biases;

    static GradientSet zeros_like(const Network& net) {
        GradientSet g;
        g.weights.reserve(net.stack.depth());
        for (const Matrix& w : net.stack.weights)
            g.weights.emplace_back(w.rows(), w.cols());
        if (net.stack.bias1) g.bias1 = Vec(net.stack.bias1->size(), 0.0);
        g.head_a.assign(net.head_a.size(), 0.0);
        g.layer_biases.reserve(net.layer_biases.size());
        for (const Vec& b : net.layer_biases) g.layer_biases.emplace_back(b.size(), 0.0);
        return g;
    }
};

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double relu_prime(double x) { return x > 0.0 ? 1.0 : 0.0; }  // 0 at the kink

inline Matrix end_to_end_jacobian(const LinearStack& stack) {
    Matrix j = stack.weights.front();
    for (std::size_t l = 1; l < stack.weights.size(); ++l)
        j = matmul(stack.weights[l], j);
    return j;
}

/// A_f = J^T J for the (bias-free part of the) linear stack.
inline Matrix agop_linear(const LinearStack& stack) {
    const Matrix j = end_to_end_jacobian(stack);
    return matmul_tn(j, j);
}

/// W_1^T W_1, the neural feature matrix.
inline Matrix neural_feature_matrix(const LinearStack& stack) {
    const Matrix& w1 = stack.weights.front();
    return matmul_tn(w1, w1);
}

inline Vec forward(const Network& net, const Vec& x) {
    if (x.size() != net.input_dim()) throw ShapeError("forward: input dimension mismatch");
    switch (net.head) {
        case HeadKind::none: {
            Vec z = x;
            for (const Matrix& w : net.stack.weights) z = matvec(w, z);
            if (net.stack.bias1)
                for (std::size_t i = 0; i < z.size(); ++i) z[i] += (*net.stack.bias1)[i];
            return z;
        }
        case HeadKind::relu_head: {
            Vec z = x;
            for (const Matrix& w : net.stack.weights) z = matvec(w, z);
            if (net.stack.bias1)
                for (std::size_t i = 0; i < z.size(); ++i) z[i] += (*net.stack.bias1)[i];
            double out = net.head_b2;
            for (std::size_t i = 0; i < z.size(); ++i) out += net.head_a[i] * relu(z[i]);
            return Vec{out};
        }
        case HeadKind::feedforward: {
            Vec h = x;
            for (std::size_t l = 0; l < net.stack.depth(); ++l) {
                h = matvec(net.stack.weights[l], h);
                for (std::size_t i = 0; i < h.size(); ++i)
                    h[i] = relu(h[i] + net.layer_biases[l][i]);
            }
            double out = net.head_b2;
            for (std::size_t i = 0; i < h.size(); ++i) out += net.head_a[i] * h[i];
            return Vec{out};
        }
    }
    throw Error("forward: unknown head kind");
}

inline double forward_scalar(const Network& net, const Vec& x) {
    if (!net.scalar_output())
        throw NonScalarOutputError("forward_scalar: head has vector output");
    return forward(net, x)[0];
}

/// Gradient of the (scalar) model output with respect to its input.
inline Vec input_gradient(const Network& net, const Vec& x) {
    if (x.size() != net.input_dim())
        throw ShapeError("input_gradient: input dimension mismatch");
    if (!net.scalar_output())
        throw NonScalarOutputError("input_gradient: requires a scalar-output head");

    if (net.head == HeadKind::relu_head) {
        Vec z = x;
        for (const Matrix& w : net.stack.weights) z = matvec(w, z);
        if (net.stack.bias1)
            for (std::size_t i = 0; i < z.size(); ++i) z[i] += (*net.stack.bias1)[i];
        Vec delta(z.size());
        for (std::size_t i = 0; i < z.size(); ++i)
            delta[i] = net.head_a[i] * relu_prime(z[i]);
        for (std::size_t l = net.stack.depth(); l-- > 0;)
            delta = matvec_t(net.stack.weights[l], delta);
        return delta;
    }

    // feedforward
    std::vector<Vec> pre(net.stack.depth());
    Vec h = x;
    for (std::size_t l = 0; l < net.stack.depth(); ++l) {
        Vec u = matvec(net.stack.weights[l], h);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] += net.layer_biases[l][i];
        pre[l] = u;
        h.resize(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) h[i] = relu(u[i]);
    }
    Vec delta = net.head_a;
    for (std::size_t l = net.stack.depth(); l-- > 0;) {
        for (std::size_t i = 0; i < delta.size(); ++i)
            delta[i] *= relu_prime(pre[l][i]);
        delta = matvec_t(net.stack.weights[l], delta);
    }
    return delta;
}

/// Empirical AGOP (1/N) sum grad f(x_i) grad f(x_i)^T from an input-gradient
/// oracle. Inputs are rows of xs.
inline Matrix agop_empirical(const std::function<Vec(const Vec&)>& gradient,
                             const Matrix& xs) {
    if (xs.rows() == 0) throw EmptyDatasetError("agop_empirical: no inputs");
    const std::size_t d = xs.cols();
    Matrix a(d, d);
    Vec x(d);
    for (std::size_t i = 0; i < xs.rows(); ++i) {
        for (std::size_t j = 0; j < d; ++j) x[j] = xs(i, j);
        const Vec g = gradient(x);
        if (g.size() != d) throw ShapeError("agop_empirical: gradient dimension mismatch");
        for (std::size_t r = 0; r < d; ++r) {
            const double gr = g[r];
            if (gr == 0.0) continue;
            for (std::size_t c = 0; c < d; ++c) a(r, c) += gr * g[c];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(xs.rows());
    a *= inv_n;
    return a;
}

inline Matrix agop_empirical(const Network& net, const Matrix& xs) {
    return agop_empirical([&net](const Vec& x) { return input_gradient(net, x); }, xs);
}

// --- batched evaluation (row per sample) ------------------------------------

namespace detail {

inline void add_row_vector(Matrix& m, const Vec& v) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double* row = m.row_ptr(i);
        for (std::size_t j = 0; j < m.cols(); ++j) row[j] += v[j];
    }
}

/// Forward pass over a batch X (B x d); returns the outputs (B x out) and
/// fills the per-layer activations needed by backprop.
struct BatchForward {
    std::vector<Matrix> activations;  // activations[0] = X, then post-layer values
    std::vector<Matrix> preacts;      // pre-activation values where ReLUs apply
    Matrix outputs;                   // B x out (out = 1 for scalar heads)
};

inline BatchForward batch_forward(const Network& net, const Matrix& x) {
    BatchForward fw;
    fw.activations.push_back(x);
    switch (net.head) {
        case HeadKind::none:
        case HeadKind::relu_head: {
            Matrix z = x;
            for (const Matrix& w : net.stack.weights) {
                z = matmul_nt(z, w);
                fw.activations.push_back(z);
            }
            if (net.stack.bias1) add_row_vector(z, *net.stack.bias1);
            if (net.head == HeadKind::none) {
                fw.outputs = std::move(z);
            } else {
                fw.preacts.push_back(z);
                Matrix out(z.rows(), 1);
                for (std::size_t i = 0; i < z.rows(); ++i) {
                    const double* row = z.row_ptr(i);
                    double s = net.head_b2;
                    for (std::size_t j = 0; j < z.cols(); ++j)
                        s += net.head_a[j] * relu(row[j]);
                    out(i, 0) = s;
                }
                fw.outputs = std::move(out);
            }
            return fw;
        }
        case HeadKind::feedforward: {
            Matrix h = x;
            for (std::size_t l = 0; l < net.stack.depth(); ++l) {
                Matrix u = matmul_nt(h, net.stack.weights[l]);
                add_row_vector(u, net.layer_biases[l]);
                fw.preacts.push_back(u);
                h = u;
                for (double& v : h.flat()) v = relu(v);
                fw.activations.push_back(h);
            }
            Matrix out(h.rows(), 1);
            for (std::size_t i = 0; i < h.rows(); ++i) {
                const double* row = h.row_ptr(i);
                double s = net.head_b2;
                for (std::size_t j = 0; j < h.cols(); ++j) s += net.head_a[j] * row[j];
                out(i, 0) = s;
            }
            fw.outputs = std::move(out);
            return fw;
        }
    }
    throw Error("batch_forward: unknown head kind");
}

}  // namespace detail

/// Mean squared error over a batch given as matrices (row per sample):
/// (1/N) sum_i ||f(x_i) - y_i||^2.
inline double mse_loss_batch(const Network& net, const Matrix& x, const Matrix& y) {
    if (x.rows() == 0) throw EmptyDatasetError("mse_loss: empty batch");
    if (x.rows() != y.rows()) throw ShapeError("mse_loss: input/target count mismatch");
    detail::BatchForward fw = detail::batch_forward(net, x);
    if (fw.outputs.cols() != y.cols())
        throw ShapeError("mse_loss: output/target dimension mismatch");
    double s = 0.0;
    auto fo = fw.outputs.flat();
    auto fy = y.flat();
    for (std::size_t i = 0; i < fo.size(); ++i) {
        const double d = fo[i] - fy[i];
        s += d * d;
    }
    return s / static_cast<double>(x.rows());
}

namespace detail {

/// Backward pass reusing an existing forward evaluation.
inline GradientSet gradients_from_forward(const Network& net, const BatchForward& fw,
                                          const Matrix& x, const Matrix& y) {
    if (fw.outputs.cols() != y.cols())
        throw ShapeError("parameter_gradients: output/target dimension mismatch");

    const std::size_t batch = x.rows();
    const double scale = 2.0 / static_cast<double>(batch);
    GradientSet grads = GradientSet::zeros_like(net);

    Matrix delta(fw.outputs.rows(), fw.outputs.cols());
    for (std::size_t i = 0; i < delta.size(); ++i)
        delta.flat()[i] = scale * (fw.outputs.flat()[i] - y.flat()[i]);

    switch (net.head) {
        case HeadKind::none: {
            // delta is B x out; bias1 gradient is its column sum.
            if (grads.bias1)
                for (std::size_t i = 0; i < batch; ++i)
                    for (std::size_t j = 0; j < delta.cols(); ++j)
                        (*grads.bias1)[j] += delta(i, j);
            for (std::size_t l = net.stack.depth(); l-- > 0;) {
                grads.weights[l] = matmul_tn(delta, fw.activations[l]);
                if (l > 0) delta = matmul(delta, net.stack.weights[l]);
            }
            return grads;
        }
        case HeadKind::relu_head: {
            const Matrix& pre = fw.preacts[0];  // B x w_L (includes b1)
            Matrix dz(batch, pre.cols());
            for (std::size_t i = 0; i < batch; ++i) {
                const double di = delta(i, 0);
                const double* prow = pre.row_ptr(i);
                double* drow = dz.row_ptr(i);
                for (std::size_t j = 0; j < pre.cols(); ++j) {
                    grads.head_a[j] += di * relu(prow[j]);
                    drow[j] = di * net.head_a[j] * relu_prime(prow[j]);
                }
                grads.head_b2 += di;
            }
            if (grads.bias1)
                for (std::size_t i = 0; i < batch; ++i)
                    for (std::size_t j = 0; j < dz.cols(); ++j)
                        (*grads.bias1)[j] += dz(i, j);
            Matrix back = std::move(dz);
            for (std::size_t l = net.stack.depth(); l-- > 0;) {
                grads.weights[l] = matmul_tn(back, fw.activations[l]);
                if (l > 0) back = matmul(back, net.stack.weights[l]);
            }
            return grads;
        }
        case HeadKind::feedforward: {
            const Matrix& h_last = fw.activations.back();
            Matrix back(batch, h_last.cols());
            for (std::size_t i = 0; i < batch; ++i) {
                const double di = delta(i, 0);
                const double* hrow = h_last.row_ptr(i);
                double* brow = back.row_ptr(i);
                for (std::size_t j = 0; j < h_last.cols(); ++j) {
                    grads.head_a[j] += di * hrow[j];
                    brow[j] = di * net.head_a[j];
                }
                grads.head_b2 += di;
            }
            for (std::size_t l = net.stack.depth(); l-- > 0;) {
                const Matrix& pre = fw.preacts[l];
                for (std::size_t i = 0; i < batch; ++i) {
                    double* brow = back.row_ptr(i);
                    const double* prow = pre.row_ptr(i);
                    for (std::size_t j = 0; j < back.cols(); ++j)
                        brow[j] *= relu_prime(prow[j]);
                }
                grads.weights[l] = matmul_tn(back, fw.activations[l]);
                for (std::size_t i = 0; i < batch; ++i)
                    for (std::size_t j = 0; j < back.cols(); ++j)
                        grads.layer_biases[l][j] += back(i, j);
                if (l > 0) back = matmul(back, net.stack.weights[l]);
            }
            return grads;
        }
    }
    throw Error("parameter_gradients: unknown head kind");
}

}  // namespace detail

/// Analytic gradient of mse_loss_batch with respect to every parameter.
inline GradientSet parameter_gradients_batch(const Network& net, const Matrix& x,
                                             const Matrix& y) {
    if (x.rows() == 0) throw EmptyDatasetError("parameter_gradients: empty batch");
    if (x.rows() != y.rows())
        throw ShapeError("parameter_gradients: input/target count mismatch");
    detail::BatchForward fw = detail::batch_forward(net, x);
    return detail::gradients_from_forward(net, fw, x, y);
}

}  // namespace nfa
