#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "nfa/matrix.hpp"
#include "nfa/rng.hpp"

namespace nfa {

struct SymEig {
    Vec eigenvalues;      // descending
    Matrix eigenvectors;  // orthonormal columns, same order
};

struct Svd {
    Matrix u;
    Vec singular_values;  // non-negative, descending
    Matrix v;
};

inline double cosine_similarity(const Matrix& m, const Matrix& n) {
    if (!m.same_shape(n)) throw ShapeError("cosine_similarity: shape mismatch");
    const double nm = frobenius_norm(m);
    const double nn = frobenius_norm(n);
    if (nm == 0.0 || nn == 0.0)
        throw ZeroMatrixError("cosine_similarity: zero operand");
    double tr = 0.0;
    auto fm = m.flat();
    auto fn = n.flat();
    for (std::size_t i = 0; i < fm.size(); ++i) tr += fm[i] * fn[i];
    return tr / (nm * nn);
}

namespace detail {

inline void require_symmetric(const Matrix& a) {
    if (a.rows() != a.cols()) throw NotSymmetricError("matrix not square");
    double asym = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j) {
            const double d = a(i, j) - a(j, i);
            asym += 2.0 * d * d;
        }
    if (std::sqrt(asym) > 1e-9 * (1.0 + frobenius_norm(a)))
        throw NotSymmetricError("matrix not symmetric within tolerance");
}

inline double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
}

}  // namespace detail

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Adequate and
/// robust at the dimensions used here (<= 128); iteration cap 100 sweeps.
inline SymEig sym_eig(const Matrix& input) {
    detail::require_symmetric(input);
    const std::size_t n = input.rows();

    // Work on the symmetrized copy so tiny asymmetries cannot bias rotations.
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            a(i, j) = 0.5 * (input(i, j) + input(j, i));

    Matrix q = Matrix::identity(n);
    const double norm = frobenius_norm(a);
    const double tol = 1e-12 * (norm > 0.0 ? norm : 1.0);

    bool converged = false;
    for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
        if (detail::off_diagonal_norm(a) <= tol) {
            converged = true;
            break;
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q_idx = p + 1; q_idx < n; ++q_idx) {
                const double apq = a(p, q_idx);
                if (std::fabs(apq) <= tol / (n * n)) continue;
                const double app = a(p, p);
                const double aqq = a(q_idx, q_idx);
                const double theta = (aqq - app) / (2.0 * apq);
                double t;
                if (std::fabs(theta) > 1e150) {
                    t = 1.0 / (2.0 * theta);
                } else {
                    t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                    if (theta < 0.0) t = -t;
                }
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q_idx);
                    a(k, p) = c * akp - s * akq;
                    a(k, q_idx) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q_idx, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q_idx, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double qkp = q(k, p);
                    const double qkq = q(k, q_idx);
                    q(k, p) = c * qkp - s * qkq;
                    q(k, q_idx) = s * qkp + c * qkq;
                }
            }
        }
    }
    if (!converged && detail::off_diagonal_norm(a) > tol)
        throw NoConvergenceError("sym_eig: Jacobi sweep cap exceeded");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&a](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    SymEig out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.eigenvalues[j] = a(src, src);
        // Canonical sign: largest-magnitude component positive.
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (std::fabs(q(i, src)) > best) {
                best = std::fabs(q(i, src));
                arg = i;
            }
        }
        const double sign = q(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, j) = sign * q(i, src);
    }
    return out;
}

/// Rebuilds Q * diag(f(lambda)) * Q^T, symmetrizing the result.
inline Matrix reconstruct_from_eig(const SymEig& eig, const Vec& values) {
    const std::size_t n = eig.eigenvalues.size();
    Matrix scaled = eig.eigenvectors;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) scaled(i, j) *= values[j];
    Matrix m = matmul_nt(scaled, eig.eigenvectors);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double avg = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = avg;
            m(j, i) = avg;
        }
    return m;
}

/// Fractional power of an (approximately) PSD symmetric matrix from a
/// precomputed eigendecomposition. Eigenvalues below the noise threshold are
/// clamped to zero; genuinely negative ones are rejected by matrix_power.
inline Matrix power_from_eig(const SymEig& eig, double alpha) {
    Vec powered(eig.eigenvalues.size());
    for (std::size_t i = 0; i < powered.size(); ++i) {
        const double lam = std::max(eig.eigenvalues[i], 0.0);
        powered[i] = lam == 0.0 ? 0.0 : std::pow(lam, alpha);
    }
    return reconstruct_from_eig(eig, powered);
}

inline Matrix matrix_power(const Matrix& a, double alpha) {
    SymEig eig = sym_eig(a);
    const double lam_max = eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues.front();
    const double floor = -1e-10 * std::max(lam_max, 0.0);
    for (double lam : eig.eigenvalues)
        if (lam < floor)
            throw IndefiniteInputError("matrix_power: negative eigenvalue beyond noise threshold");
    return power_from_eig(eig, alpha);
}

/// Reduced SVD via the eigendecomposition of the smaller Gram matrix.
/// Acceptable at the condition numbers arising in this project.
inline Svd svd(const Matrix& a) {
    const bool tall = a.rows() >= a.cols();
    const Matrix& work = a;
    const std::size_t k = std::min(a.rows(), a.cols());

    // Gram of the smaller side: A^T A if tall, A A^T otherwise.
    Matrix gram = tall ? matmul_tn(work, work) : matmul_nt(work, work);
    SymEig eig = sym_eig(gram);

    // Gram eigenvalues below roundoff level are noise from forming A^T A;
    // clamp them to exact zeros rather than reporting sqrt(eps)-sized values.
    const double lam_max = eig.eigenvalues.empty() ? 0.0 : std::max(eig.eigenvalues.front(), 0.0);
    Vec sigma(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double lam = eig.eigenvalues[i];
        sigma[i] = lam > 1e-12 * lam_max ? std::sqrt(lam) : 0.0;
    }

    // Small side: eigenvectors directly. Large side: normalized A v, with
    // a Gram-Schmidt pass against earlier columns and orthonormal completion
    // for null columns.
    Matrix small_side = eig.eigenvectors;  // (k x k)
    const std::size_t big_dim = tall ? a.rows() : a.cols();
    Matrix big_side(big_dim, k);
    std::vector<bool> filled(k, false);
    for (std::size_t j = 0; j < k; ++j) {
        if (sigma[j] == 0.0) continue;
        Vec vj(k);
        for (std::size_t i = 0; i < k; ++i) vj[i] = small_side(i, j);
        Vec uj = tall ? matvec(work, vj) : matvec_t(work, vj);
        for (std::size_t c = 0; c < j; ++c) {
            if (!filled[c]) continue;
            double proj = 0.0;
            for (std::size_t i = 0; i < big_dim; ++i) proj += uj[i] * big_side(i, c);
            for (std::size_t i = 0; i < big_dim; ++i) uj[i] -= proj * big_side(i, c);
        }
        const double norm = std::sqrt(dot(uj, uj));
        if (norm <= 1e-9 * std::max(sigma.front(), 1.0)) {
            sigma[j] = 0.0;
            continue;
        }
        for (std::size_t i = 0; i < big_dim; ++i) big_side(i, j) = uj[i] / norm;
        filled[j] = true;
    }
    for (std::size_t j = 0; j < k; ++j) {
        if (filled[j]) continue;
        // Orthonormal completion: Gram-Schmidt a canonical basis vector
        // against every column set so far.
        for (std::size_t candidate = 0; candidate < big_dim; ++candidate) {
            Vec e(big_dim, 0.0);
            e[candidate] = 1.0;
            for (std::size_t c = 0; c < k; ++c) {
                if (!filled[c]) continue;
                double proj = 0.0;
                for (std::size_t i = 0; i < big_dim; ++i) proj += e[i] * big_side(i, c);
                for (std::size_t i = 0; i < big_dim; ++i) e[i] -= proj * big_side(i, c);
            }
            const double norm = std::sqrt(dot(e, e));
            if (norm > 1e-6) {
                for (std::size_t i = 0; i < big_dim; ++i) big_side(i, j) = e[i] / norm;
                filled[j] = true;
                break;
            }
        }
    }

    Svd out;
    out.singular_values = std::move(sigma);
    if (tall) {
        out.u = std::move(big_side);
        out.v = std::move(small_side);
    } else {
        out.u = std::move(small_side);
        out.v = std::move(big_side);
    }
    return out;
}

namespace detail {

/// Householder QR returning the reduced Q (rows x cols) and the sign of each
/// R diagonal entry.
inline void householder_qr(Matrix a, Matrix& q_out, Vec& r_diag_sign) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    std::vector<Vec> reflectors;
    reflectors.reserve(n);
    r_diag_sign.assign(n, 1.0);

    for (std::size_t j = 0; j < n; ++j) {
        Vec v(m, 0.0);
        double norm = 0.0;
        for (std::size_t i = j; i < m; ++i) norm += a(i, j) * a(i, j);
        norm = std::sqrt(norm);
        const double ajj = a(j, j);
        const double alpha = ajj >= 0.0 ? -norm : norm;
        if (norm > 0.0) {
            v[j] = ajj - alpha;
            for (std::size_t i = j + 1; i < m; ++i) v[i] = a(i, j);
            double vnorm2 = 0.0;
            for (std::size_t i = j; i < m; ++i) vnorm2 += v[i] * v[i];
            if (vnorm2 > 0.0) {
                for (std::size_t col = j; col < n; ++col) {
                    double s = 0.0;
                    for (std::size_t i = j; i < m; ++i) s += v[i] * a(i, col);
                    const double f = 2.0 * s / vnorm2;
                    for (std::size_t i = j; i < m; ++i) a(i, col) -= f * v[i];
                }
            }
        }
        r_diag_sign[j] = a(j, j) >= 0.0 ? 1.0 : -1.0;
        reflectors.push_back(std::move(v));
    }

    // Accumulate the reduced Q by applying the reflectors to I's leading
    // columns in reverse order.
    q_out = Matrix(m, n);
    for (std::size_t j = 0; j < n; ++j) q_out(j, j) = 1.0;
    for (std::size_t r = n; r-- > 0;) {
        const Vec& v = reflectors[r];
        double vnorm2 = 0.0;
        for (std::size_t i = r; i < m; ++i) vnorm2 += v[i] * v[i];
        if (vnorm2 == 0.0) continue;
        for (std::size_t col = 0; col < n; ++col) {
            double s = 0.0;
            for (std::size_t i = r; i < m; ++i) s += v[i] * q_out(i, col);
            const double f = 2.0 * s / vnorm2;
            for (std::size_t i = r; i < m; ++i) q_out(i, col) -= f * v[i];
        }
    }
}

}  // namespace detail

/// Leading columns of a Haar-distributed orthogonal matrix: QR of a standard
/// Gaussian matrix with the R-diagonal sign correction.
inline Matrix haar_columns(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows < cols) throw ShapeError("haar_columns: rows < cols");
    Matrix g(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) g(i, j) = rng.normal();
    Matrix q;
    Vec sign;
    detail::householder_qr(std::move(g), q, sign);
    for (std::size_t j = 0; j < cols; ++j)
        if (sign[j] < 0.0)
            for (std::size_t i = 0; i < rows; ++i) q(i, j) = -q(i, j);
    return q;
}

}  // namespace nfa
