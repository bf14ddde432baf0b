#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mesc/errors.hpp"

namespace mesc {

/// Dense row-major matrix of 64-bit reals. All computation in this library is double
/// precision; there is no sparse or single-precision path.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(rows * cols, fill) {
        if (rows == 0 || cols == 0) {
            throw DimensionError("matrix dimensions must be at least 1x1, got " +
                                 std::to_string(rows) + "x" + std::to_string(cols));
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n, 0.0);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return v_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

    std::vector<double>& data() { return v_; }
    const std::vector<double>& data() const { return v_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
        return *this;
    }

    Matrix& operator-=(const Matrix& o) {
        require_same_shape(o, "-=");
        for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
        return *this;
    }

    Matrix& operator*=(double s) {
        for (double& x : v_) x *= s;
        return *this;
    }

    void require_same_shape(const Matrix& o, const std::string& op) const {
        if (!same_shape(o)) {
            throw DimensionError("shape mismatch in " + op + ": " + shape_str() + " vs " +
                                 o.shape_str());
        }
    }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> v_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(double s, Matrix a) { return a *= s; }

/// C = A * B, ikj loop order so the inner loop streams contiguous rows.
inline Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul shape mismatch: " + a.shape_str() + " * " + b.shape_str());
    }
    Matrix c(a.rows(), b.cols(), 0.0);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = pa[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = pb + p * n;
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline double trace(const Matrix& a) {
    if (a.rows() != a.cols()) throw DimensionError("trace requires a square matrix");
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, i);
    return s;
}

inline double frobenius_norm_sq(const Matrix& a) {
    double s = 0.0;
    for (double x : a.data()) s += x * x;
    return s;
}

inline double frobenius_norm(const Matrix& a) { return std::sqrt(frobenius_norm_sq(a)); }

inline double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double x : a.data()) m = std::max(m, std::abs(x));
    return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    a.require_same_shape(b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

inline bool all_finite(const Matrix& a) {
    for (double x : a.data())
        if (!std::isfinite(x)) return false;
    return true;
}

/// Solves A X = B for symmetric positive definite A via Cholesky (A = L L^T).
inline Matrix cholesky_solve(const Matrix& a, const Matrix& b) {
    if (a.rows() != a.cols()) throw DimensionError("cholesky_solve requires square A");
    if (a.rows() != b.rows()) {
        throw DimensionError("cholesky_solve shape mismatch: " + a.shape_str() + " vs " +
                             b.shape_str());
    }
    const std::size_t n = a.rows();
    Matrix l(n, n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t p = 0; p < j; ++p) d -= l(j, p) * l(j, p);
        if (d <= 0.0) throw DomainError("cholesky_solve: matrix is not positive definite");
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t p = 0; p < j; ++p) s -= l(i, p) * l(j, p);
            l(i, j) = s / l(j, j);
        }
    }
    Matrix x = b;
    // forward substitution L Y = B, then back substitution L^T X = Y
    for (std::size_t c = 0; c < x.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = x(i, c);
            for (std::size_t p = 0; p < i; ++p) s -= l(i, p) * x(p, c);
            x(i, c) = s / l(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = x(ii, c);
            for (std::size_t p = ii + 1; p < n; ++p) s -= l(p, ii) * x(p, c);
            x(ii, c) = s / l(ii, ii);
        }
    }
    return x;
}

}  // namespace mesc
