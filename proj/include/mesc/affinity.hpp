#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mesc/adam.hpp"
#include "mesc/eigen.hpp"
#include "mesc/errors.hpp"
#include "mesc/matrix.hpp"

namespace mesc {

enum class Regularizer { MaxEntropy, L1, FrobeniusSquared, Nuclear };

inline std::string regularizer_name(Regularizer r) {
    switch (r) {
        case Regularizer::MaxEntropy: return "me";
        case Regularizer::L1: return "l1";
        case Regularizer::FrobeniusSquared: return "fro";
        case Regularizer::Nuclear: return "nuc";
    }
    return "?";
}

inline Regularizer regularizer_from_name(const std::string& s) {
    if (s == "me") return Regularizer::MaxEntropy;
    if (s == "l1") return Regularizer::L1;
    if (s == "fro") return Regularizer::FrobeniusSquared;
    if (s == "nuc") return Regularizer::Nuclear;
    throw ValueError("unknown regularizer '" + s + "' (expected me|l1|fro|nuc)");
}

/// Penalty choice plus the two trade-off weights: lambda1 scales the regularizer,
/// lambda2 scales the self-expressive residual ||Z - ZC||_F^2.
struct RegularizerSpec {
    Regularizer kind = Regularizer::MaxEntropy;
    double lambda1 = 1.0;
    double lambda2 = 10.0;

    void validate() const {
        if (!(lambda1 > 0.0)) throw ValueError("lambda1 must be a positive real");
        if (!(lambda2 > 0.0)) throw ValueError("lambda2 must be a positive real");
    }
};

/// The diagonal constraint is only required by the baseline penalties; the
/// max-entropy penalty does not need it to avoid the trivial solution C = I.
inline bool default_zero_diagonal(Regularizer kind) {
    return kind != Regularizer::MaxEntropy;
}

enum class StepRule { Adam, GradientDescent };

struct SolverConfig {
    double learning_rate = 1e-4;
    std::size_t max_iterations = 20000;
    /// Converged once the relative objective change stays below this for 10
    /// consecutive iterations. Zero disables early stopping.
    double relative_tolerance = 1e-8;
    /// Feasibility floor for the max-entropy penalty (keeps ln(c) finite).
    double epsilon = 1e-12;
    std::uint64_t seed = 0;
    /// Unset means: use default_zero_diagonal(kind).
    std::optional<bool> zero_diagonal;
    StepRule step_rule = StepRule::Adam;
    /// Initial value of every affinity entry. Unset means 1/n. Block-structure
    /// benchmarks start from the feasibility floor instead: a uniform start
    /// carries an off-block null-space component that no descent direction of
    /// the objective ever removes.
    std::optional<double> init_value;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ValueError("learning_rate must be a positive real");
        if (max_iterations < 1) throw ValueError("max_iterations must be at least 1");
        if (!(epsilon > 0.0)) throw ValueError("epsilon must be a positive real");
        if (relative_tolerance < 0.0) throw ValueError("relative_tolerance must be >= 0");
        if (init_value && !(*init_value >= 0.0)) {
            throw ValueError("init_value must be nonnegative");
        }
    }
};

struct SolveReport {
    Matrix affinity;
    std::vector<double> objective_trace;  // objective of the iterate entering each iteration
    std::size_t iterations = 0;
    bool converged = false;
};

/// Sum of c*ln(c) over all entries (the negated entropy), with 0*ln(0) := 0.
/// Kahan-compensated so the value is permutation invariant to ~1e-13.
inline double neg_entropy(const Matrix& c) {
    double sum = 0.0, comp = 0.0;
    for (double x : c.data()) {
        if (x < 0.0) throw DomainError("neg_entropy: negative entry " + std::to_string(x));
        if (x == 0.0) continue;
        const double term = x * std::log(x) - comp;
        const double next = sum + term;
        comp = (next - sum) - term;
        sum = next;
    }
    return sum;
}

/// lambda1 * sum c ln c + lambda2 * ||Z - ZC||_F^2
inline double me_objective(const Matrix& z, const Matrix& c, double lambda1, double lambda2) {
    if (c.rows() != c.cols() || c.rows() != z.cols()) {
        throw DimensionError("me_objective: C must be n x n for Z with n columns (Z " +
                             z.shape_str() + ", C " + c.shape_str() + ")");
    }
    const Matrix r = z - z * c;
    return lambda1 * neg_entropy(c) + lambda2 * frobenius_norm_sq(r);
}

/// Gradient of me_objective with respect to C:
///   lambda1 * (ln C + 1) - 2 * lambda2 * Z^T (Z - ZC).
/// Entries of C must sit at or above the feasibility floor.
inline Matrix me_gradient(const Matrix& z, const Matrix& c, double lambda1, double lambda2,
                          double floor = 1e-12) {
    if (c.rows() != c.cols() || c.rows() != z.cols()) {
        throw DimensionError("me_gradient: C must be n x n for Z with n columns (Z " +
                             z.shape_str() + ", C " + c.shape_str() + ")");
    }
    for (double x : c.data()) {
        if (x < floor) {
            throw DomainError("me_gradient: entry " + std::to_string(x) +
                              " is below the feasibility floor; clamp C first");
        }
    }
    const Matrix r = z - z * c;
    Matrix g = transpose(z) * r;
    g *= -2.0 * lambda2;
    for (std::size_t i = 0; i < c.size(); ++i) {
        g.data()[i] += lambda1 * (std::log(c.data()[i]) + 1.0);
    }
    return g;
}

/// Unique minimizer of lambda1 ||C||_F^2 + lambda2 ||Z - ZC||_F^2, i.e. the
/// solution of (lambda1 I + lambda2 Z^T Z) C = lambda2 Z^T Z. Test oracle for
/// the iterative squared-Frobenius solver.
inline Matrix closed_form_frobenius(const Matrix& z, double lambda1, double lambda2) {
    if (!(lambda1 > 0.0)) throw ValueError("closed_form_frobenius: lambda1 must be positive");
    const Matrix g = transpose(z) * z;
    Matrix lhs = g;
    lhs *= lambda2;
    for (std::size_t i = 0; i < lhs.rows(); ++i) lhs(i, i) += lambda1;
    Matrix rhs = g;
    rhs *= lambda2;
    return cholesky_solve(lhs, rhs);
}

/// Elementwise soft-thresholding: sign(m) * max(|m| - threshold, 0).
inline Matrix prox_l1(const Matrix& m, double threshold) {
    if (threshold < 0.0) throw ValueError("prox_l1: threshold must be nonnegative");
    Matrix out = m;
    for (double& x : out.data()) {
        const double mag = std::abs(x) - threshold;
        x = mag > 0.0 ? (x > 0.0 ? mag : -mag) : 0.0;
    }
    return out;
}

namespace detail {

/// Shared core of prox_nuclear; optionally reports the nuclear norm of the result.
inline Matrix svt(const Matrix& m, double threshold, double* result_nuclear_norm) {
    const Matrix gram = transpose(m) * m;
    const SymEigen eig = sym_eigen(gram);
    const std::size_t n = gram.rows();
    std::vector<double> factor(n);
    double norm_after = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sigma = std::sqrt(std::max(eig.values[i], 0.0));
        factor[i] = sigma > threshold ? (sigma - threshold) / sigma : 0.0;
        norm_after += std::max(sigma - threshold, 0.0);
    }
    if (result_nuclear_norm) *result_nuclear_norm = norm_after;
    // M * V * diag(factor) * V^T
    Matrix scaled = eig.vectors;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) scaled(i, j) *= factor[j];
    return (m * scaled) * transpose(eig.vectors);
}

}  // namespace detail

/// Singular-value soft-thresholding via the eigendecomposition of M^T M:
/// with M = U S V^T, returns U max(S - threshold, 0) V^T computed as
/// M V f(S) V^T, f(s) = max(s - t, 0) / s.
inline Matrix prox_nuclear(const Matrix& m, double threshold) {
    if (threshold < 0.0) throw ValueError("prox_nuclear: threshold must be nonnegative");
    return detail::svt(m, threshold, nullptr);
}

/// P^T C P for the permutation perm: output(i, j) = C(perm(i), perm(j)).
inline Matrix permute_affinity(const Matrix& c, const std::vector<std::size_t>& perm) {
    if (c.rows() != c.cols()) throw DimensionError("permute_affinity requires square C");
    const std::size_t n = c.rows();
    if (perm.size() != n) throw ValueError("permute_affinity: permutation length != n");
    std::vector<bool> seen(n, false);
    for (std::size_t p : perm) {
        if (p >= n || seen[p]) throw ValueError("permute_affinity: not a bijection on {0..n-1}");
        seen[p] = true;
    }
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out(i, j) = c(perm[i], perm[j]);
    return out;
}

namespace detail {

inline double nuclear_norm_of(const Matrix& m) {
    const SymEigen eig = sym_eigen(transpose(m) * m);
    double s = 0.0;
    for (double v : eig.values) s += std::sqrt(std::max(v, 0.0));
    return s;
}

inline double l1_norm_of(const Matrix& m) {
    double s = 0.0;
    for (double x : m.data()) s += std::abs(x);
    return s;
}

}  // namespace detail

/// Learns the affinity matrix by first-order descent on the regularized
/// self-expressive objective, starting from the uniform matrix C = (1/n) 11^T.
/// Per iteration: a gradient step on the smooth part (ADAM by default, plain
/// gradient descent as the alternative step rule), then the feasibility map of
/// the chosen penalty -- elementwise clamp to [epsilon, inf) for max-entropy,
/// soft-thresholding for l1, singular-value thresholding for nuclear -- and
/// finally the optional diagonal zeroing.
inline SolveReport solve_affinity(const Matrix& z, const RegularizerSpec& reg,
                                  const SolverConfig& cfg) {
    reg.validate();
    cfg.validate();
    const std::size_t n = z.cols();
    if (n < 2) throw DimensionError("solve_affinity: need at least 2 samples");

    const bool zero_diag = cfg.zero_diagonal.value_or(default_zero_diagonal(reg.kind));
    const double l1 = reg.lambda1, l2 = reg.lambda2;
    const Matrix zt = transpose(z);

    Matrix c(n, n, cfg.init_value.value_or(1.0 / static_cast<double>(n)));
    if (zero_diag)
        for (std::size_t i = 0; i < n; ++i) c(i, i) = 0.0;
    if (reg.kind == Regularizer::MaxEntropy)
        for (double& x : c.data()) x = std::max(x, cfg.epsilon);

    AdamState adam(c.size());
    // nuclear norm of the current iterate, reused from the previous prox pass
    double nuc_norm = reg.kind == Regularizer::Nuclear ? detail::nuclear_norm_of(c) : 0.0;

    SolveReport report{c, {}, 0, false};
    report.objective_trace.reserve(std::min<std::size_t>(cfg.max_iterations, 1 << 20));
    int calm_iterations = 0;

    for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
        const Matrix r = z - z * c;
        const double residual = frobenius_norm_sq(r);

        double objective = l2 * residual;
        switch (reg.kind) {
            case Regularizer::MaxEntropy: objective += l1 * neg_entropy(c); break;
            case Regularizer::L1: objective += l1 * detail::l1_norm_of(c); break;
            case Regularizer::FrobeniusSquared: objective += l1 * frobenius_norm_sq(c); break;
            case Regularizer::Nuclear: objective += l1 * nuc_norm; break;
        }
        if (!std::isfinite(objective)) {
            throw DivergenceError("solve_affinity: non-finite objective at iteration " +
                                  std::to_string(it));
        }

        if (!report.objective_trace.empty()) {
            const double prev = report.objective_trace.back();
            const double rel = std::abs(objective - prev) / std::max(1.0, std::abs(prev));
            calm_iterations = rel < cfg.relative_tolerance ? calm_iterations + 1 : 0;
        }
        report.objective_trace.push_back(objective);
        report.iterations = it;
        if (cfg.relative_tolerance > 0.0 && calm_iterations >= 10) {
            report.converged = true;
            break;
        }

        // gradient of the smooth part
        Matrix grad = zt * r;
        grad *= -2.0 * l2;
        if (reg.kind == Regularizer::MaxEntropy) {
            for (std::size_t i = 0; i < c.size(); ++i)
                grad.data()[i] += l1 * (std::log(c.data()[i]) + 1.0);
        } else if (reg.kind == Regularizer::FrobeniusSquared) {
            for (std::size_t i = 0; i < c.size(); ++i) grad.data()[i] += 2.0 * l1 * c.data()[i];
        }

        if (cfg.step_rule == StepRule::Adam) {
            adam_step(c, grad, adam, cfg.learning_rate);
        } else {
            for (std::size_t i = 0; i < c.size(); ++i)
                c.data()[i] -= cfg.learning_rate * grad.data()[i];
        }

        switch (reg.kind) {
            case Regularizer::MaxEntropy:
                for (double& x : c.data()) x = std::max(x, cfg.epsilon);
                break;
            case Regularizer::L1:
                c = prox_l1(c, l1 * cfg.learning_rate);
                break;
            case Regularizer::Nuclear:
                c = detail::svt(c, l1 * cfg.learning_rate, &nuc_norm);
                break;
            case Regularizer::FrobeniusSquared:
                break;
        }
        if (zero_diag)
            for (std::size_t i = 0; i < n; ++i) c(i, i) = 0.0;
        if (reg.kind == Regularizer::MaxEntropy && zero_diag) {
            // the clamp must win over the diagonal constraint to keep ln feasible
            for (std::size_t i = 0; i < n; ++i) c(i, i) = cfg.epsilon;
        }
    }

    report.affinity = std::move(c);
    return report;
}

}  // namespace mesc
