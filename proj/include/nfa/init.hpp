#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "nfa/linalg.hpp"
#include "nfa/network.hpp"
#include "nfa/rng.hpp"

namespace nfa {

using LayerShape = std::pair<std::size_t, std::size_t>;  // (rows, cols)

/// Entry-wise U(-1/sqrt(d_l), 1/sqrt(d_l)) with d_l the in-degree of layer l.
inline LinearStack default_uniform_init(const std::vector<LayerShape>& shapes, Rng& rng) {
    if (shapes.empty()) throw ShapeError("default_uniform_init: no layers");
    for (std::size_t l = 0; l + 1 < shapes.size(); ++l)
        if (shapes[l + 1].second != shapes[l].first)
            throw ShapeError("default_uniform_init: shapes do not conform");
    LinearStack stack;
    stack.weights.reserve(shapes.size());
    for (const auto& [rows, cols] : shapes) {
        if (rows == 0 || cols == 0) throw ShapeError("default_uniform_init: empty layer");
        const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
        Matrix w(rows, cols);
        for (double& v : w.flat()) v = rng.uniform(-bound, bound);
        stack.weights.push_back(std::move(w));
    }
    return stack;
}

/// The closed-form factor applied to W_1 before balancing:
/// sqrt( d1 d3 (5 d2 + 5 d3 - 1) / (d2^2 (5 d1 + 5 d2 - 1)) ).
inline double w1_rescale_factor(std::size_t d1, std::size_t d2, std::size_t d3) {
    if (d1 < 1 || d2 < 1 || d3 < 1)
        throw ConfigError("w1_rescale_factor: dimensions must be >= 1");
    const double a = static_cast<double>(d1);
    const double b = static_cast<double>(d2);
    const double c = static_cast<double>(d3);
    return std::sqrt(a * c * (5.0 * b + 5.0 * c - 1.0) /
                     (b * b * (5.0 * a + 5.0 * b - 1.0)));
}

/// Balancing construction: rescale W_1, take its reduced SVD, then rebuild
/// every layer as U_l Sigma U_{l-1}^T with fresh Haar factors, so each
/// adjacent pair satisfies W_l W_l^T = W_{l+1}^T W_{l+1}. The end-to-end map
/// then has singular values Sigma^L. Requires d_{l+1} >= d_1 for every l.
inline LinearStack force_balanced(const LinearStack& stack, Rng& rng) {
    stack.validate();
    const std::size_t depth = stack.depth();
    const std::size_t d1 = stack.input_dim();

    LinearStack out;
    out.bias1 = stack.bias1;
    if (depth == 1) {
        out.weights = {stack.weights.front()};
        return out;
    }
    for (std::size_t l = 0; l < depth; ++l)
        if (stack.weights[l].rows() < d1)
            throw ShapeError("force_balanced: layer out-degree below input dimension");

    Matrix w1 = stack.weights.front();
    const std::size_t d2 = stack.weights[0].rows();
    const std::size_t d3 = stack.weights[1].rows();
    w1 *= w1_rescale_factor(d1, d2, d3);

    const Svd decomp = svd(w1);  // U_1 (d2 x d1), Sigma (d1), V_1 (d1 x d1)
    out.weights.resize(depth);
    out.weights[0] = std::move(w1);

    Matrix u_prev = decomp.u;
    for (std::size_t l = 1; l < depth; ++l) {
        Matrix u_next = haar_columns(stack.weights[l].rows(), d1, rng);
        Matrix scaled = u_next;  // U_l * Sigma
        for (std::size_t j = 0; j < d1; ++j)
            for (std::size_t i = 0; i < scaled.rows(); ++i)
                scaled(i, j) *= decomp.singular_values[j];
        out.weights[l] = matmul_nt(scaled, u_prev);
        u_prev = std::move(u_next);
    }
    return out;
}

/// Per-pair balancedness defects ||W_l W_l^T - W_{l+1}^T W_{l+1}||_F and
/// their maximum (the c_max of the exponential-balancing lemma when taken at
/// initialization).
struct BalanceReport {
    Vec defects;  // length L-1
    double c_max = 0.0;
};

inline Matrix balance_defect_matrix(const LinearStack& stack, std::size_t pair) {
    const Matrix& lo = stack.weights[pair];
    const Matrix& hi = stack.weights[pair + 1];
    Matrix d = matmul_nt(lo, lo);
    d -= matmul_tn(hi, hi);
    return d;
}

inline BalanceReport balance_report(const LinearStack& stack) {
    if (stack.depth() < 2) throw TooShallowError("balance_report: needs L >= 2");
    BalanceReport report;
    report.defects.reserve(stack.depth() - 1);
    for (std::size_t l = 0; l + 1 < stack.depth(); ++l) {
        const double defect = frobenius_norm(balance_defect_matrix(stack, l));
        report.defects.push_back(defect);
        report.c_max = std::max(report.c_max, defect);
    }
    return report;
}

}  // namespace nfa
