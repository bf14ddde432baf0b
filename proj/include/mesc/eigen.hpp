#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mesc/errors.hpp"
#include "mesc/matrix.hpp"

namespace mesc {

struct SymEigen {
    std::vector<double> values;  // ascending
    Matrix vectors;              // column i pairs with values[i]; orthonormal
};

namespace detail {

inline double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

}  // namespace detail

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Sweeps run until the off-diagonal Frobenius mass drops below 1e-12 * ||A||_F.
/// Returns eigenvalues in ascending order with matching orthonormal eigenvectors.
inline SymEigen sym_eigen(const Matrix& input) {
    const std::size_t n = input.rows();
    if (n != input.cols()) {
        throw DimensionError("sym_eigen requires a square matrix, got " + input.shape_str());
    }
    double scale = max_abs(input);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(input(i, j) - input(j, i)) > 1e-10 * std::max(scale, 1e-300)) {
                throw DomainError("sym_eigen: input is asymmetric at (" + std::to_string(i) +
                                  "," + std::to_string(j) + ")");
            }
        }
    }

    Matrix a = input;
    Matrix v = Matrix::identity(n);
    const double norm = frobenius_norm(a);
    const double threshold = 1e-12 * std::max(norm, 1e-300);

    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        if (detail::off_diagonal_norm(a) < threshold) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                // symmetric Schur 2x2: choose the rotation that annihilates a(p,q)
                const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

    SymEigen out{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
    }
    return out;
}

}  // namespace mesc
