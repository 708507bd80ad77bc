#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "nfa/init.hpp"
#include "nfa/linalg.hpp"
#include "nfa/network.hpp"
#include "nfa/optim.hpp"
#include "nfa/targets.hpp"

namespace nfa {

/// Per-recorded-epoch series gathered while training: loss, the cosine of
/// the feature matrix against the 1/L-power of the AGOP, both theorem gaps,
/// per-pair balancedness defects, and (optionally) a full alpha sweep.
struct AlignmentTrace {
    std::vector<double> epochs;
    std::vector<double> times;  // accumulated epoch * learning-rate
    std::vector<double> loss;
    std::vector<double> cos_inv_l;
    std::vector<double> gap_thm2;       // ||A - (W1^T W1)^L||_F
    std::vector<double> gap_corollary;  // ||A^{1/L} - W1^T W1||_F
    std::vector<Vec> defects;           // one entry per record, length L-1
    Vec alpha_tilde_grid;
    std::vector<Vec> alpha_cosines;  // one row per record when grid nonempty
    bool nan_status = false;

    std::size_t records() const { return epochs.size(); }
};

inline Vec make_alpha_tilde_grid(double lo = 0.1, double hi = 3.0, double step = 0.05) {
    Vec grid;
    const std::size_t count = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
    grid.reserve(count);
    for (std::size_t k = 0; k < count; ++k) grid.push_back(lo + static_cast<double>(k) * step);
    return grid;
}

/// cos(W_1^T W_1, A^alpha) for each requested alpha; the AGOP and its
/// eigendecomposition are computed once.
inline Vec alpha_sweep(const LinearStack& stack, const Vec& alphas) {
    const Matrix feature = neural_feature_matrix(stack);
    const Matrix agop = agop_linear(stack);
    if (frobenius_norm(agop) == 0.0)
        throw ZeroMatrixError("alpha_sweep: zero AGOP");
    const SymEig eig = sym_eig(agop);
    Vec cosines;
    cosines.reserve(alphas.size());
    for (double alpha : alphas)
        cosines.push_back(cosine_similarity(feature, power_from_eig(eig, alpha)));
    return cosines;
}

struct NfaVerdict {
    double cosine = 0.0;
    double frobenius_gap = 0.0;
    double bound_value = 0.0;
    bool satisfied = false;
};

/// Exact-NFA check: gap = ||W_1^T W_1 - A^{1/L}||_F, accepted when it stays
/// below tol * (1 + ||A^{1/L}||_F).
inline NfaVerdict check_nfa_exact(const LinearStack& stack, double tol) {
    if (stack.depth() < 2) throw TooShallowError("check_nfa_exact: needs L >= 2");
    const Matrix feature = neural_feature_matrix(stack);
    const Matrix agop = agop_linear(stack);
    const Matrix root = matrix_power(agop, 1.0 / static_cast<double>(stack.depth()));
    NfaVerdict v;
    v.frobenius_gap = frobenius_norm(feature - root);
    v.bound_value = tol * (1.0 + frobenius_norm(root));
    v.satisfied = v.frobenius_gap <= v.bound_value;
    const double fn = frobenius_norm(feature);
    const double rn = frobenius_norm(root);
    v.cosine = (fn > 0.0 && rn > 0.0) ? cosine_similarity(feature, root)
                                      : std::numeric_limits<double>::quiet_NaN();
    return v;
}

/// Ordinary least-squares slope of log(series) against time over the
/// [lo_frac, hi_frac] window of the recorded points, skipping values below
/// the floating-point floor. Returns NaN when fewer than two usable points
/// remain.
inline double fit_log_slope(const std::vector<double>& times,
                            const std::vector<double>& series,
                            double lo_frac = 0.2, double hi_frac = 0.9,
                            double floor = 1e-12) {
    const std::size_t n = std::min(times.size(), series.size());
    const std::size_t lo = static_cast<std::size_t>(lo_frac * static_cast<double>(n));
    const std::size_t hi = static_cast<std::size_t>(hi_frac * static_cast<double>(n));
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::size_t used = 0;
    for (std::size_t i = lo; i < hi && i < n; ++i) {
        if (!(series[i] > floor) || !std::isfinite(series[i])) continue;
        const double x = times[i];
        const double y = std::log(series[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++used;
    }
    if (used < 2) return std::numeric_limits<double>::quiet_NaN();
    const double denom = static_cast<double>(used) * sxx - sx * sx;
    if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (static_cast<double>(used) * sxy - sx * sy) / denom;
}

struct AsymptoticFit {
    double thm2_slope = 0.0;       // fitted rate of log ||A - (W1^T W1)^L||
    double corollary_slope = 0.0;  // fitted rate of log ||A^{1/L} - W1^T W1||
    bool degenerate = false;       // gap started at numerical zero (balanced)
    bool satisfied = false;
};

/// Fits the decay rates of both theorem gaps against t. The verdict accepts
/// when each gap decays at least as fast as 90% of its guaranteed rate
/// (-2 lambda and -2 lambda / L respectively).
inline AsymptoticFit check_nfa_asymptotic(const AlignmentTrace& trace, double lambda,
                                          std::size_t depth) {
    if (!(lambda > 0.0))
        throw InsufficientDecayError("check_nfa_asymptotic: requires lambda > 0");
    if (trace.records() < 20)
        throw InsufficientTraceError("check_nfa_asymptotic: needs >= 20 recorded points");
    AsymptoticFit fit;
    if (!trace.gap_thm2.empty() && trace.gap_thm2.front() <= 1e-8) {
        fit.degenerate = true;
        fit.satisfied = true;  // balanced start: nothing to decay
        return fit;
    }
    fit.thm2_slope = fit_log_slope(trace.times, trace.gap_thm2);
    fit.corollary_slope = fit_log_slope(trace.times, trace.gap_corollary);
    const double l = static_cast<double>(depth);
    fit.satisfied = std::isfinite(fit.thm2_slope) && std::isfinite(fit.corollary_slope) &&
                    fit.thm2_slope <= -2.0 * lambda * 0.9 &&
                    fit.corollary_slope <= -2.0 * lambda / l * 0.9;
    return fit;
}

/// d^{(L-1)/(2L)} ||X - Y||_F^{1/L}, the Frobenius bound on the gap between
/// L-th principal roots of PSD matrices.
inline double wihler_gap_bound(const Matrix& x, const Matrix& y, std::size_t depth) {
    if (!x.same_shape(y) || x.rows() != x.cols())
        throw ShapeError("wihler_gap_bound: need square matrices of equal size");
    for (const Matrix* m : {&x, &y}) {
        const SymEig eig = sym_eig(*m);
        const double top = eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues.front();
        for (double lam : eig.eigenvalues)
            if (lam < -1e-10 * std::max(top, 1.0))
                throw NotPsdError("wihler_gap_bound: operand not PSD");
    }
    const double d = static_cast<double>(x.rows());
    const double l = static_cast<double>(depth);
    return std::pow(d, (l - 1.0) / (2.0 * l)) *
           std::pow(frobenius_norm(x - y), 1.0 / l);
}

/// ||X^{1/L} - Y^{1/L}||_F, the left side the Wihler bound controls.
inline double rooted_power_gap(const Matrix& x, const Matrix& y, std::size_t depth) {
    const double inv_l = 1.0 / static_cast<double>(depth);
    return frobenius_norm(matrix_power(x, inv_l) - matrix_power(y, inv_l));
}

/// C_F = sqrt( (2/lambda) (L(theta_0) + (lambda/2) sum ||W_{l,0}||_F^2) ),
/// valid with L_low = 0 for mean squared error. The sum runs over every
/// parameter block the decay penalty covers (weight matrices and, for ReLU
/// heads, the readout vector), so the resulting bound dominates ||W_{l,t}||_F
/// for all l and t along the decayed flow.
inline double cf_bound(const Network& net, const Dataset& data, double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("cf_bound: lambda must be positive");
    const double loss0 = mse_loss_batch(net, data.inputs, data.targets);
    double norms = 0.0;
    for (const Matrix& w : net.stack.weights) {
        const double f = frobenius_norm(w);
        norms += f * f;
    }
    for (double a : net.head_a) norms += a * a;
    return std::sqrt((2.0 / lambda) * (loss0 + 0.5 * lambda * norms));
}

/// The telescoping gaps ||D_{l+1} - D_l||_F with
/// D_l = (prod_{j<l} W_j^T) (W_l^T W_l)^{L-l+1} (prod_{j<l} W_j^T)^T,
/// whose sum dominates ||A - (W_1^T W_1)^L||_F.
inline Vec telescope_defects(const LinearStack& stack) {
    if (stack.depth() < 2) throw TooShallowError("telescope_defects: needs L >= 2");
    const std::size_t depth = stack.depth();
    std::vector<Matrix> d(depth + 1);
    Matrix prefix_t = Matrix::identity(stack.input_dim());  // (W_{l-1}...W_1)^T
    for (std::size_t l = 1; l <= depth; ++l) {
        const Matrix& w = stack.weights[l - 1];
        const Matrix gram = matmul_tn(w, w);
        const Matrix powered = matrix_int_power(gram, depth - l + 1);
        const Matrix tmp = matmul(prefix_t, powered);
        d[l] = matmul_nt(tmp, prefix_t);
        prefix_t = matmul_nt(prefix_t, w);  // append W_l^T on the right
    }
    Vec gaps;
    gaps.reserve(depth - 1);
    for (std::size_t l = 1; l < depth; ++l)
        gaps.push_back(frobenius_norm(d[l + 1] - d[l]));
    return gaps;
}

/// Builds a monitor that fills an AlignmentTrace from a (linear-part)
/// network during training. When `alpha_grid` is nonempty a full sweep is
/// recorded at every checkpoint.
inline Monitor make_alignment_recorder(AlignmentTrace& trace, Vec alpha_grid = {}) {
    trace = AlignmentTrace{};
    trace.alpha_tilde_grid = std::move(alpha_grid);
    return [&trace](const RecordContext& ctx) {
        const LinearStack& stack = ctx.net->stack;
        const std::size_t depth = stack.depth();
        trace.epochs.push_back(static_cast<double>(ctx.epoch));
        trace.times.push_back(ctx.time);
        trace.loss.push_back(ctx.loss);
        if (!std::isfinite(ctx.loss)) {
            trace.nan_status = true;
            const double nan = std::numeric_limits<double>::quiet_NaN();
            trace.cos_inv_l.push_back(nan);
            trace.gap_thm2.push_back(nan);
            trace.gap_corollary.push_back(nan);
            trace.defects.emplace_back(depth > 0 ? depth - 1 : 0, nan);
            if (!trace.alpha_tilde_grid.empty())
                trace.alpha_cosines.emplace_back(trace.alpha_tilde_grid.size(), nan);
            return;
        }

        const Matrix feature = neural_feature_matrix(stack);
        const Matrix agop = agop_linear(stack);
        const SymEig eig = sym_eig(agop);
        const Matrix root = power_from_eig(eig, 1.0 / static_cast<double>(depth));
        trace.cos_inv_l.push_back(cosine_similarity(feature, root));
        trace.gap_corollary.push_back(frobenius_norm(root - feature));
        trace.gap_thm2.push_back(
            frobenius_norm(agop - matrix_int_power(feature, depth)));

        Vec defects;
        defects.reserve(depth > 0 ? depth - 1 : 0);
        for (std::size_t l = 0; l + 1 < depth; ++l)
            defects.push_back(frobenius_norm(balance_defect_matrix(stack, l)));
        trace.defects.push_back(std::move(defects));

        if (!trace.alpha_tilde_grid.empty()) {
            Vec cosines;
            cosines.reserve(trace.alpha_tilde_grid.size());
            for (double at : trace.alpha_tilde_grid)
                cosines.push_back(cosine_similarity(
                    feature, power_from_eig(eig, at / static_cast<double>(depth))));
            trace.alpha_cosines.push_back(std::move(cosines));
        }
    };
}

}  // namespace nfa
