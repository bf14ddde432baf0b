#include "catch_amalgamated.hpp"

#include <cmath>
#include <numeric>

#include "mesc/affinity.hpp"
#include "mesc/data.hpp"
#include "mesc/rng.hpp"

using namespace mesc;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = rng.next_gaussian();
    return m;
}

Matrix random_feasible_affinity(std::size_t n, Rng& rng, double lo = 0.05, double hi = 1.5) {
    Matrix m(n, n);
    for (double& x : m.data()) x = lo + (hi - lo) * rng.next_double();
    return m;
}

// independent two-loop oracle for the max-entropy objective
double me_objective_oracle(const Matrix& z, const Matrix& c, double l1, double l2) {
    double entropy = 0.0;
    for (double x : c.data())
        if (x > 0.0) entropy += x * std::log(x);
    double residual = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t j = 0; j < z.cols(); ++j) {
            double zc = 0.0;
            for (std::size_t p = 0; p < z.cols(); ++p) zc += z(i, p) * c(p, j);
            const double diff = z(i, j) - zc;
            residual += diff * diff;
        }
    }
    return l1 * entropy + l2 * residual;
}

// one-sided Jacobi SVD, used as an independent oracle for singular values
std::vector<double> singular_values_oracle(const Matrix& input) {
    Matrix a = input;
    const std::size_t rows = a.rows(), cols = a.cols();
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < rows; ++i) {
                    app += a(i, p) * a(i, p);
                    aqq += a(i, q) * a(i, q);
                    apq += a(i, p) * a(i, q);
                }
                off = std::max(off, std::abs(apq));
                if (apq == 0.0 || std::abs(apq) < 1e-15 * std::sqrt(app * aqq)) continue;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = t * cs;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = cs * aip - sn * aiq;
                    a(i, q) = sn * aip + cs * aiq;
                }
            }
        }
        if (off < 1e-14) break;
    }
    std::vector<double> sigma(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += a(i, j) * a(i, j);
        sigma[j] = std::sqrt(s);
    }
    std::sort(sigma.begin(), sigma.end(), std::greater<double>());
    return sigma;
}

}  // namespace

TEST_CASE("neg_entropy analytic values", "[affinity]") {
    CHECK(neg_entropy(Matrix::identity(3)) == Catch::Approx(0.0).margin(1e-15));

    Matrix third(3, 3, 1.0 / 3.0);
    CHECK(neg_entropy(third) == Catch::Approx(-3.0 * std::log(3.0)).margin(1e-12));

    Matrix inv_e(2, 2, std::exp(-1.0));
    CHECK(neg_entropy(inv_e) == Catch::Approx(-4.0 / std::exp(1.0)).margin(1e-12));

    Matrix neg(2, 2, 0.5);
    neg(1, 1) = -0.1;
    CHECK_THROWS_AS(neg_entropy(neg), DomainError);
}

TEST_CASE("neg_entropy is permutation invariant", "[affinity]") {
    Rng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 5 + static_cast<std::size_t>(rep);
        const Matrix c = random_feasible_affinity(n, rng);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = n; i-- > 1;) {
            const std::size_t j = static_cast<std::size_t>(rng.next_double() * (i + 1));
            std::swap(perm[i], perm[std::min(j, i)]);
        }
        const Matrix permuted = permute_affinity(c, perm);
        CHECK(std::abs(neg_entropy(permuted) - neg_entropy(c)) < 1e-12);
    }
}

TEST_CASE("entropy term is strictly convex between feasible points", "[affinity]") {
    Rng rng(33);
    for (int rep = 0; rep < 50; ++rep) {
        const Matrix c1 = random_feasible_affinity(6, rng, 0.01, 2.0);
        const Matrix c2 = random_feasible_affinity(6, rng, 0.01, 2.0);
        Matrix mid = c1;
        for (std::size_t i = 0; i < mid.size(); ++i)
            mid.data()[i] = 0.5 * (c1.data()[i] + c2.data()[i]);
        const double chord = 0.5 * neg_entropy(c1) + 0.5 * neg_entropy(c2);
        CHECK(neg_entropy(mid) < chord);
    }
}

TEST_CASE("me_objective analytic and oracle values", "[affinity]") {
    Matrix z0(4, 2, 0.0);
    Matrix inv_e(2, 2, std::exp(-1.0));
    CHECK(me_objective(z0, inv_e, 1.0, 1.0) ==
          Catch::Approx(-4.0 / std::exp(1.0)).margin(1e-12));

    Rng rng(17);
    const Matrix z = random_matrix(3, 5, rng);
    CHECK(me_objective(z, Matrix::identity(5), 1.0, 1.0) == Catch::Approx(0.0).margin(1e-20));

    const Matrix z46 = random_matrix(4, 6, rng);
    const Matrix c = random_feasible_affinity(6, rng);
    const double expected = me_objective_oracle(z46, c, 0.7, 2.3);
    CHECK(me_objective(z46, c, 0.7, 2.3) == Catch::Approx(expected).margin(1e-10));

    CHECK_THROWS_AS(me_objective(z46, Matrix(5, 5, 0.1), 1.0, 1.0), DimensionError);
}

TEST_CASE("me_gradient analytic fixed points", "[affinity]") {
    Matrix z0(3, 4, 0.0);
    const Matrix c_inv_e(4, 4, std::exp(-1.0));
    const Matrix g = me_gradient(z0, c_inv_e, 1.0, 1.0);
    CHECK(max_abs(g) < 1e-14);

    const Matrix ones(4, 4, 1.0);
    const Matrix g1 = me_gradient(z0, ones, 1.0, 1.0);
    for (double x : g1.data()) CHECK(x == Catch::Approx(1.0).margin(1e-14));

    Matrix low(4, 4, 0.5);
    low(2, 2) = 1e-13;  // below the floor
    CHECK_THROWS_AS(me_gradient(z0, low, 1.0, 1.0), DomainError);
}

TEST_CASE("me_gradient matches central finite differences", "[affinity]") {
    Rng rng(29);
    const double h = 1e-6;
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix z = random_matrix(3, 5, rng);
        Matrix c = random_feasible_affinity(5, rng, 0.1, 1.2);
        const double l1 = 0.5 + rng.next_double();
        const double l2 = 0.5 + 2.0 * rng.next_double();
        const Matrix grad = me_gradient(z, c, l1, l2);
        for (int probe = 0; probe < 6; ++probe) {
            const std::size_t i = static_cast<std::size_t>(rng.next_double() * 5);
            const std::size_t j = static_cast<std::size_t>(rng.next_double() * 5);
            const double saved = c(i, j);
            c(i, j) = saved + h;
            const double fp = me_objective(z, c, l1, l2);
            c(i, j) = saved - h;
            const double fm = me_objective(z, c, l1, l2);
            c(i, j) = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double denom = std::max(std::abs(fd), 1e-8);
            CHECK(std::abs(grad(i, j) - fd) / denom < 1e-4);
        }
    }
}

TEST_CASE("closed_form_frobenius fixed points and residual", "[affinity]") {
    const Matrix z0(4, 6, 0.0);
    CHECK(max_abs(closed_form_frobenius(z0, 1.0, 1.0)) == 0.0);

    // orthonormal columns: Z^T Z = I so (1 + 1) C = I
    Rng rng(41);
    Matrix q = random_matrix(8, 4, rng);
    mesc::detail::orthonormalize_columns(q);
    const Matrix c_half = closed_form_frobenius(q, 1.0, 1.0);
    CHECK(max_abs_diff(c_half, 0.5 * Matrix::identity(4)) < 1e-12);

    const Matrix z = random_matrix(6, 10, rng);
    const double l1 = 0.8, l2 = 1.7;
    const Matrix c = closed_form_frobenius(z, l1, l2);
    const Matrix g = transpose(z) * z;
    Matrix lhs = g;
    lhs *= l2;
    for (std::size_t i = 0; i < 10; ++i) lhs(i, i) += l1;
    Matrix rhs = g;
    rhs *= l2;
    CHECK(frobenius_norm(lhs * c - rhs) < 1e-10);
}

TEST_CASE("prox_l1 definition and subgradient optimality", "[affinity]") {
    Rng rng(55);
    const Matrix m = random_matrix(4, 4, rng);
    CHECK(max_abs_diff(prox_l1(m, 0.0), m) == 0.0);

    Matrix two(1, 2);
    two(0, 0) = 0.5;
    two(0, 1) = -0.1;
    const Matrix shrunk = prox_l1(two, 0.2);
    CHECK(shrunk(0, 0) == Catch::Approx(0.3).margin(1e-15));
    CHECK(shrunk(0, 1) == 0.0);

    CHECK_THROWS_AS(prox_l1(m, -0.5), ValueError);

    // subgradient conditions of 0.5||X - M||^2 + t ||X||_1 per entry
    const double t = 0.3;
    const Matrix x = prox_l1(m, t);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double xi = x.data()[i], mi = m.data()[i];
        if (xi != 0.0) {
            CHECK(std::abs(xi - mi + t * (xi > 0 ? 1.0 : -1.0)) < 1e-12);
        } else {
            CHECK(std::abs(mi) <= t + 1e-12);
        }
    }
}

TEST_CASE("prox_nuclear identity, rank-1 and oracle cases", "[affinity]") {
    Rng rng(61);
    const Matrix m = random_matrix(5, 5, rng);
    CHECK(max_abs_diff(prox_nuclear(m, 0.0), m) < 1e-10);

    // rank-1: 3 * u v^T with unit u, v shrinks to 2 * u v^T
    Matrix u(4, 1), v(4, 1);
    for (std::size_t i = 0; i < 4; ++i) {
        u(i, 0) = rng.next_gaussian();
        v(i, 0) = rng.next_gaussian();
    }
    const double nu = frobenius_norm(u), nv = frobenius_norm(v);
    Matrix rank1(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) rank1(i, j) = 3.0 * u(i, 0) * v(j, 0) / (nu * nv);
    const Matrix shrunk = prox_nuclear(rank1, 1.0);
    Matrix expected = rank1;
    expected *= 2.0 / 3.0;
    CHECK(max_abs_diff(shrunk, expected) < 1e-10);

    // nuclear norm of the output equals sum of max(sigma - t, 0), via an
    // independent one-sided Jacobi SVD oracle
    const double t = 0.8;
    const Matrix out = prox_nuclear(m, t);
    const auto sigma_in = singular_values_oracle(m);
    const auto sigma_out = singular_values_oracle(out);
    double expected_norm = 0.0;
    for (double s : sigma_in) expected_norm += std::max(s - t, 0.0);
    double actual_norm = 0.0;
    for (double s : sigma_out) actual_norm += s;
    CHECK(actual_norm == Catch::Approx(expected_norm).margin(1e-8));
}

TEST_CASE("permute_affinity contracts", "[affinity]") {
    Rng rng(71);
    const Matrix c = random_feasible_affinity(6, rng);
    std::vector<std::size_t> ident(6);
    std::iota(ident.begin(), ident.end(), 0);
    CHECK(max_abs_diff(permute_affinity(c, ident), c) == 0.0);

    std::vector<std::size_t> swapped = ident;
    std::swap(swapped[1], swapped[4]);
    const Matrix once = permute_affinity(c, swapped);
    const Matrix twice = permute_affinity(once, swapped);
    CHECK(max_abs_diff(twice, c) == 0.0);

    std::vector<std::size_t> bad = ident;
    bad[0] = 3;  // duplicate
    CHECK_THROWS_AS(permute_affinity(c, bad), ValueError);
}

TEST_CASE("solve_affinity reaches the analytic max-entropy fixed point", "[affinity]") {
    // Z = 0: the objective decouples per entry into x ln x, minimized at 1/e
    const Matrix z(4, 6, 0.0);
    RegularizerSpec reg{Regularizer::MaxEntropy, 1.0, 1.0};

    SolverConfig adam_cfg;
    adam_cfg.learning_rate = 1e-3;
    adam_cfg.max_iterations = 20000;
    adam_cfg.relative_tolerance = 0.0;
    const SolveReport adam_report = solve_affinity(z, reg, adam_cfg);
    for (double x : adam_report.affinity.data())
        CHECK(x == Catch::Approx(std::exp(-1.0)).margin(1e-4));

    SolverConfig gd_cfg;
    gd_cfg.step_rule = StepRule::GradientDescent;
    gd_cfg.learning_rate = 0.05;
    gd_cfg.max_iterations = 2000;
    gd_cfg.relative_tolerance = 1e-14;
    const SolveReport gd_report = solve_affinity(z, reg, gd_cfg);
    CHECK(gd_report.converged);
    for (double x : gd_report.affinity.data())
        CHECK(x == Catch::Approx(std::exp(-1.0)).margin(1e-6));
}

TEST_CASE("solve_affinity squared-Frobenius matches the closed form", "[affinity]") {
    Rng rng(81);
    const Matrix z = random_matrix(10, 40, rng);
    const Matrix oracle = closed_form_frobenius(z, 1.0, 1.0);

    RegularizerSpec reg{Regularizer::FrobeniusSquared, 1.0, 1.0};
    SolverConfig cfg;
    cfg.step_rule = StepRule::GradientDescent;
    cfg.learning_rate = 5e-3;
    cfg.max_iterations = 20000;
    cfg.relative_tolerance = 0.0;
    cfg.zero_diagonal = false;  // the closed form has no diagonal constraint
    const SolveReport report = solve_affinity(z, reg, cfg);
    CHECK(max_abs_diff(report.affinity, oracle) <= 1e-5);
}

TEST_CASE("solve_affinity objective trace is tail-monotone", "[affinity]") {
    Rng rng(91);
    const Matrix z = random_matrix(5, 12, rng);
    RegularizerSpec reg{Regularizer::MaxEntropy, 0.5, 5.0};
    SolverConfig cfg;
    cfg.step_rule = StepRule::GradientDescent;
    cfg.learning_rate = 1e-3;
    cfg.max_iterations = 3000;
    cfg.relative_tolerance = 0.0;
    const SolveReport report = solve_affinity(z, reg, cfg);
    REQUIRE(report.objective_trace.size() == report.iterations);
    const std::size_t tail = report.iterations - report.iterations / 10;
    for (std::size_t i = tail; i < report.iterations; ++i) {
        CHECK(report.objective_trace[i] <= report.objective_trace[i - 1] + 1e-6);
    }
}

TEST_CASE("solve_affinity raises a divergence error naming the iteration", "[affinity]") {
    Rng rng(99);
    const Matrix z = random_matrix(4, 8, rng);
    RegularizerSpec reg{Regularizer::FrobeniusSquared, 1.0, 1.0};
    SolverConfig cfg;
    cfg.step_rule = StepRule::GradientDescent;
    cfg.learning_rate = 1e6;  // wildly unstable on purpose
    cfg.max_iterations = 500;
    cfg.relative_tolerance = 0.0;
    try {
        solve_affinity(z, reg, cfg);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
}

TEST_CASE("solve_affinity validates arguments", "[affinity]") {
    const Matrix z(3, 4, 0.0);
    CHECK_THROWS_AS(
        solve_affinity(z, RegularizerSpec{Regularizer::MaxEntropy, 0.0, 1.0}, SolverConfig{}),
        ValueError);
    SolverConfig bad;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(solve_affinity(z, RegularizerSpec{}, bad), ValueError);
}
