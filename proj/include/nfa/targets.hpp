#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nfa/linalg.hpp"
#include "nfa/matrix.hpp"
#include "nfa/network.hpp"
#include "nfa/rng.hpp"

namespace nfa {

enum class Link { relu, gauss, identity };

inline double apply_link(Link link, double x) {
    switch (link) {
        case Link::relu: return x > 0.0 ? x : 0.0;
        case Link::gauss: return std::exp(-x * x);
        case Link::identity: return x;
    }
    return x;
}

inline double link_derivative(Link link, double x) {
    switch (link) {
        case Link::relu: return x > 0.0 ? 1.0 : 0.0;
        case Link::gauss: return -2.0 * x * std::exp(-x * x);
        case Link::identity: return 1.0;
    }
    return 1.0;
}

inline std::string link_name(Link link) {
    switch (link) {
        case Link::relu: return "relu";
        case Link::gauss: return "gauss";
        case Link::identity: return "identity";
    }
    return "?";
}

/// Low-rank multi-index target f*(x) = a^T g(Cx + b) (scalar) or
/// f*(x) = g(Cx + b) (vector), where C has rank r by construction.
struct MultiIndexTarget {
    Matrix coeff;  // (out_rows x d), rank = `rank`
    Vec head;      // scalar combination weights; empty for vector output
    Vec shift;     // bias inside the link
    Link link = Link::relu;
    bool scalar = true;
    std::size_t rank = 0;

    std::size_t input_dim() const { return coeff.cols(); }
    std::size_t output_dim() const { return scalar ? 1 : coeff.rows(); }

    Vec evaluate(const Vec& x) const {
        Vec u = matvec(coeff, x);
        for (std::size_t i = 0; i < u.size(); ++i)
            u[i] = apply_link(link, u[i] + shift[i]);
        if (!scalar) return u;
        double s = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) s += head[i] * u[i];
        return Vec{s};
    }

    double evaluate_scalar(const Vec& x) const {
        if (!scalar) throw NonScalarOutputError("target has vector output");
        return evaluate(x)[0];
    }

    /// Analytic input gradient (scalar targets): C^T (a .* g'(Cx + b)).
    Vec gradient(const Vec& x) const {
        if (!scalar) throw NonScalarOutputError("gradient: target has vector output");
        Vec u = matvec(coeff, x);
        Vec w(u.size());
        for (std::size_t i = 0; i < u.size(); ++i)
            w[i] = head[i] * link_derivative(link, u[i] + shift[i]);
        return matvec_t(coeff, w);
    }
};

/// Coefficients drawn uniform on (-1,1), then every row of the matrix is
/// normalized to unit length, so each link unit sees a preactivation of
/// spread ~0.29 on the sampling cube. Shifts are drawn at that same scale,
/// keeping the nonlinearities active (a wider shift freezes most ReLU
/// indicators on the cube and collapses the effective rank of the target's
/// gradient outer product). Vector targets with out_rows > rank get the rank
/// through a factor product.
inline MultiIndexTarget make_multiindex_target(std::size_t rank, std::size_t d,
                                               Link link, bool scalar,
                                               std::size_t out_rows, Rng& rng) {
    if (rank == 0 || rank > d) throw ConfigError("target rank must lie in [1, d]");
    if (scalar) out_rows = rank;
    if (out_rows < rank) throw ConfigError("target out_dim must be >= rank");

    MultiIndexTarget t;
    t.link = link;
    t.scalar = scalar;
    t.rank = rank;
    if (out_rows == rank) {
        t.coeff = Matrix(rank, d);
        for (double& v : t.coeff.flat()) v = rng.uniform(-1.0, 1.0);
    } else {
        Matrix left(out_rows, rank);
        Matrix right(rank, d);
        for (double& v : left.flat()) v = rng.uniform(-1.0, 1.0);
        for (double& v : right.flat()) v = rng.uniform(-1.0, 1.0);
        t.coeff = matmul(left, right);
    }
    for (std::size_t i = 0; i < t.coeff.rows(); ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) norm += t.coeff(i, j) * t.coeff(i, j);
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (std::size_t j = 0; j < d; ++j) t.coeff(i, j) /= norm;
    }

    t.shift.resize(out_rows);
    for (double& v : t.shift) v = rng.uniform(-0.3, 0.3);
    if (scalar) {
        t.head.resize(out_rows);
        for (double& v : t.head) v = rng.uniform(-1.0, 1.0);
    }
    return t;
}

/// Sampled regression data: inputs are rows of `inputs`, targets rows of
/// `targets` (a single column for scalar targets).
struct Dataset {
    Matrix inputs;
    Matrix targets;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    std::size_t size() const { return inputs.rows(); }
    std::size_t input_dim() const { return inputs.cols(); }
    std::size_t target_dim() const { return targets.cols(); }
};

/// x_i ~ U([-1/2, 1/2]^d), y_i = f*(x_i) + sigma * standard normal per
/// output coordinate.
inline Dataset sample_multiindex(const MultiIndexTarget& target, std::size_t n,
                                 double sigma, Rng& rng) {
    if (n == 0) throw EmptyDatasetError("sample_multiindex: n must be >= 1");
    const std::size_t d = target.input_dim();
    Dataset data;
    data.noise_sigma = sigma;
    data.inputs = Matrix(n, d);
    data.targets = Matrix(n, target.output_dim());
    Vec x(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            x[j] = rng.uniform(-0.5, 0.5);
            data.inputs(i, j) = x[j];
        }
        Vec y = target.evaluate(x);
        for (std::size_t j = 0; j < y.size(); ++j) {
            data.targets(i, j) = y[j] + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
        }
    }
    return data;
}

/// Scalar function with an analytic gradient, used as an AGOP oracle.
struct ScalarTarget {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;
};

/// The ReLU-sum counterexample f*(x) = [x1]_+ + [x2]_+ with its exact
/// expected gradient outer product under a quadrant-symmetric input law,
/// the narrow interpolating net, and the widened variant for which the
/// feature matrix matches E_f exactly at alpha = 1.
struct ReluSumCounterexample {
    ScalarTarget target;
    Matrix exact_agop;  // (1/4) [[2,1],[1,2]]
    Network narrow_net;
    Network wide_net;
};

inline ReluSumCounterexample relu_sum_counterexample() {
    ReluSumCounterexample ce;
    ce.target.value = [](const Vec& x) { return relu(x[0]) + relu(x[1]); };
    ce.target.gradient = [](const Vec& x) {
        return Vec{x[0] > 0.0 ? 1.0 : 0.0, x[1] > 0.0 ? 1.0 : 0.0};
    };
    ce.exact_agop = Matrix{{0.5, 0.25}, {0.25, 0.5}};

    ce.narrow_net.stack.weights = {Matrix::identity(2)};
    ce.narrow_net.stack.bias1 = Vec{0.0, 0.0};
    ce.narrow_net.head = HeadKind::relu_head;
    ce.narrow_net.head_a = {1.0, 1.0};
    ce.narrow_net.head_b2 = 0.0;

    ce.wide_net.stack.weights = {Matrix{{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}}};
    ce.wide_net.stack.bias1 = Vec{0.0, 0.0, 0.0};
    ce.wide_net.head = HeadKind::relu_head;
    ce.wide_net.head_a = {1.0, 1.0, 0.0};
    ce.wide_net.head_b2 = 0.0;
    return ce;
}

/// The oscillation family f_n(x) = (1/n) cos(n^2 x1) + x2 against the
/// comparison f(x) = x2. Over x1 ~ U[-pi, pi] the gradient outer product of
/// f_n is diag(n^2/2, 1), so the cosine with diag(0, 1) has the closed form
/// below while the L1 distance between the functions is (2/pi)/n.
struct OscillationCounterexample {
    std::size_t n = 1;
    ScalarTarget oscillating;
    ScalarTarget comparison;
    Matrix comparison_agop;  // [[0,0],[0,1]]
    double closed_form_cosine = 0.0;
    double closed_form_l1_gap = 0.0;
};

inline OscillationCounterexample oscillation_counterexample(std::size_t n) {
    if (n < 1) throw ConfigError("oscillation_counterexample: n must be >= 1");
    OscillationCounterexample ce;
    ce.n = n;
    const double nd = static_cast<double>(n);
    const double n2 = nd * nd;
    ce.oscillating.value = [nd, n2](const Vec& x) {
        return std::cos(n2 * x[0]) / nd + x[1];
    };
    ce.oscillating.gradient = [nd, n2](const Vec& x) {
        return Vec{-nd * std::sin(n2 * x[0]), 1.0};
    };
    ce.comparison.value = [](const Vec& x) { return x[1]; };
    ce.comparison.gradient = [](const Vec&) { return Vec{0.0, 1.0}; };
    ce.comparison_agop = Matrix{{0.0, 0.0}, {0.0, 1.0}};
    const double half_n2 = n2 / 2.0;
    ce.closed_form_cosine = 1.0 / std::sqrt(1.0 + half_n2 * half_n2);
    ce.closed_form_l1_gap = (2.0 / 3.14159265358979323846) / nd;
    return ce;
}

struct OscillationAnalysis {
    Matrix empirical_agop;
    double cosine = 0.0;
    double cosine_mc_sigma = 0.0;  // delta-method standard error
    double l1_gap = 0.0;
    double max_offdiag = 0.0;
    double offdiag_mc_sigma = 0.0;
};

/// Monte-Carlo comparison of the oscillation pair over x ~ U([-pi, pi]^2).
inline OscillationAnalysis analyze_oscillation(const OscillationCounterexample& ce,
                                               std::size_t samples, Rng& rng) {
    if (samples == 0) throw EmptyDatasetError("analyze_oscillation: no samples");
    const double pi = 3.14159265358979323846;
    Matrix sum(2, 2);
    Matrix sum_sq(2, 2);
    double gap = 0.0;
    Vec x(2);
    for (std::size_t i = 0; i < samples; ++i) {
        x[0] = rng.uniform(-pi, pi);
        x[1] = rng.uniform(-pi, pi);
        const Vec g = ce.oscillating.gradient(x);
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t c = 0; c < 2; ++c) {
                const double v = g[r] * g[c];
                sum(r, c) += v;
                sum_sq(r, c) += v * v;
            }
        gap += std::fabs(ce.oscillating.value(x) - ce.comparison.value(x));
    }
    const double inv_n = 1.0 / static_cast<double>(samples);
    OscillationAnalysis out;
    out.empirical_agop = sum;
    out.empirical_agop *= inv_n;
    out.l1_gap = gap * inv_n;
    out.cosine = cosine_similarity(ce.comparison_agop, out.empirical_agop);
    out.max_offdiag = std::fabs(out.empirical_agop(0, 1));

    // Entry-wise Monte-Carlo variances, then first-order error propagation
    // of cos = A22 / ||A||_F through the empirical entries.
    Matrix var(2, 2);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) {
            const double mean = out.empirical_agop(r, c);
            var(r, c) = std::max(0.0, sum_sq(r, c) * inv_n - mean * mean) * inv_n;
        }
    out.offdiag_mc_sigma = std::sqrt(var(0, 1));
    const double a11 = out.empirical_agop(0, 0);
    const double a12 = out.empirical_agop(0, 1);
    const double a22 = out.empirical_agop(1, 1);
    const double norm2 = a11 * a11 + 2.0 * a12 * a12 + a22 * a22;
    const double norm = std::sqrt(norm2);
    const double d_a11 = -a22 * a11 / (norm2 * norm);
    const double d_a12 = -2.0 * a22 * a12 / (norm2 * norm);
    const double d_a22 = 1.0 / norm - a22 * a22 / (norm2 * norm);
    out.cosine_mc_sigma = std::sqrt(d_a11 * d_a11 * var(0, 0) +
                                    d_a12 * d_a12 * var(0, 1) +
                                    d_a22 * d_a22 * var(1, 1));
    return out;
}

struct SubspaceReport {
    std::size_t complement_dim = 0;
    double max_value_deviation = 0.0;   // |f(x_T + x_perp) - f(x_T)|
    double max_gradient_leak = 0.0;     // || proj_{T_perp} grad f ||
    double max_quadratic_form = 0.0;    // x_perp^T A_f* x_perp, unit x_perp
};

/// Verifies the three equivalent low-rank characterizations on random
/// probes: invariance along the orthogonal complement of rowspace(C),
/// gradients confined to the rowspace, and the vanishing quadratic form of
/// the AGOP on the complement.
inline SubspaceReport subspace_checks(const MultiIndexTarget& target,
                                      std::size_t probes, Rng& rng) {
    if (probes == 0) throw ConfigError("subspace_checks: probes must be >= 1");
    if (!target.scalar)
        throw NonScalarOutputError("subspace_checks: scalar targets only");
    const std::size_t d = target.input_dim();

    const Svd decomp = svd(target.coeff);
    const double sigma1 = decomp.singular_values.front();
    std::size_t r = 0;
    for (double s : decomp.singular_values)
        if (s > 1e-10 * std::max(sigma1, 1.0)) ++r;

    // Orthonormal basis of the complement of rowspace(C) inside R^d.
    Matrix basis(d, d - std::min(r, d));
    {
        std::size_t col = 0;
        // decomp.v columns beyond r span part of the complement when
        // min(rows, cols) = d; otherwise complete by Gram-Schmidt.
        std::vector<Vec> have;
        for (std::size_t j = 0; j < r; ++j) {
            Vec v(d);
            for (std::size_t i = 0; i < d; ++i) v[i] = decomp.v(i, j);
            have.push_back(std::move(v));
        }
        for (std::size_t cand = 0; cand < d && col < basis.cols(); ++cand) {
            Vec e(d, 0.0);
            e[cand] = 1.0;
            for (const Vec& h : have) {
                const double proj = dot(e, h);
                for (std::size_t i = 0; i < d; ++i) e[i] -= proj * h[i];
            }
            const double norm = std::sqrt(dot(e, e));
            if (norm > 1e-8) {
                for (std::size_t i = 0; i < d; ++i) e[i] /= norm;
                for (std::size_t i = 0; i < d; ++i) basis(i, col) = e[i];
                have.push_back(std::move(e));
                ++col;
            }
        }
    }

    SubspaceReport report;
    report.complement_dim = basis.cols();

    Matrix probe_inputs(probes, d);
    Vec x(d);
    for (std::size_t p = 0; p < probes; ++p) {
        for (std::size_t j = 0; j < d; ++j) {
            x[j] = rng.uniform(-0.5, 0.5);
            probe_inputs(p, j) = x[j];
        }
        // Split x into rowspace and complement parts.
        Vec x_perp(d, 0.0);
        for (std::size_t c = 0; c < basis.cols(); ++c) {
            double proj = 0.0;
            for (std::size_t i = 0; i < d; ++i) proj += x[i] * basis(i, c);
            for (std::size_t i = 0; i < d; ++i) x_perp[i] += proj * basis(i, c);
        }
        Vec x_top(d);
        for (std::size_t i = 0; i < d; ++i) x_top[i] = x[i] - x_perp[i];

        const double f_full = target.evaluate_scalar(x);
        const double f_top = target.evaluate_scalar(x_top);
        report.max_value_deviation =
            std::max(report.max_value_deviation, std::fabs(f_full - f_top));

        const Vec g = target.gradient(x);
        double leak2 = 0.0;
        for (std::size_t c = 0; c < basis.cols(); ++c) {
            double proj = 0.0;
            for (std::size_t i = 0; i < d; ++i) proj += g[i] * basis(i, c);
            leak2 += proj * proj;
        }
        report.max_gradient_leak = std::max(report.max_gradient_leak, std::sqrt(leak2));
    }

    const Matrix agop = agop_empirical(
        [&target](const Vec& v) { return target.gradient(v); }, probe_inputs);
    for (std::size_t c = 0; c < basis.cols(); ++c) {
        Vec b(d);
        for (std::size_t i = 0; i < d; ++i) b[i] = basis(i, c);
        const Vec ab = matvec(agop, b);
        report.max_quadratic_form =
            std::max(report.max_quadratic_form, std::fabs(dot(b, ab)));
    }
    return report;
}

/// sigma_i / sigma_1 of a (weight) matrix, descending.
inline Vec singular_value_profile(const Matrix& w1) {
    if (frobenius_norm(w1) == 0.0)
        throw ZeroMatrixError("singular_value_profile: zero matrix");
    const Svd decomp = svd(w1);
    Vec profile = decomp.singular_values;
    const double top = profile.front();
    if (top <= 0.0)
        throw ZeroMatrixError("singular_value_profile: numerically zero matrix");
    for (double& s : profile) s /= top;
    return profile;
}

}  // namespace nfa
