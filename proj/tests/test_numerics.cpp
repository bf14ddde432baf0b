#include "catch_amalgamated.hpp"

#include <cmath>

#include "mesc/adam.hpp"
#include "mesc/eigen.hpp"
#include "mesc/matrix.hpp"
#include "mesc/rng.hpp"

using namespace mesc;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = rng.next_gaussian();
    return m;
}

Matrix random_symmetric(std::size_t n, Rng& rng) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double v = rng.next_gaussian();
            m(i, j) = v;
            m(j, i) = v;
        }
    }
    return m;
}

}  // namespace

TEST_CASE("matrix basics", "[numerics]") {
    CHECK_THROWS_AS(Matrix(0, 3), DimensionError);
    CHECK_THROWS_AS(Matrix(3, 0), DimensionError);

    Rng rng(7);
    const Matrix a = random_matrix(4, 3, rng);
    const Matrix b = random_matrix(3, 5, rng);
    const Matrix c = a * b;
    // two-loop oracle
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < 3; ++p) s += a(i, p) * b(p, j);
            CHECK(c(i, j) == Catch::Approx(s).margin(1e-14));
        }
    }
    CHECK_THROWS_AS(b * a, DimensionError);

    const Matrix t = transpose(a);
    CHECK(t.rows() == 3);
    CHECK(t(0, 2) == a(2, 0));
}

TEST_CASE("cholesky_solve recovers SPD solutions", "[numerics]") {
    Rng rng(11);
    const Matrix g = random_matrix(6, 6, rng);
    Matrix spd = transpose(g) * g;
    for (std::size_t i = 0; i < 6; ++i) spd(i, i) += 1.0;
    const Matrix x_true = random_matrix(6, 2, rng);
    const Matrix b = spd * x_true;
    const Matrix x = cholesky_solve(spd, b);
    CHECK(max_abs_diff(x, x_true) < 1e-10);
}

TEST_CASE("sym_eigen identity and analytic 2x2", "[numerics]") {
    const SymEigen id = sym_eigen(Matrix::identity(3));
    for (double v : id.values) CHECK(v == Catch::Approx(1.0).margin(1e-12));

    Matrix m(2, 2);
    m(0, 0) = 2.0;
    m(0, 1) = 1.0;
    m(1, 0) = 1.0;
    m(1, 1) = 2.0;
    const SymEigen e = sym_eigen(m);
    CHECK(e.values[0] == Catch::Approx(1.0).margin(1e-10));
    CHECK(e.values[1] == Catch::Approx(3.0).margin(1e-10));
}

TEST_CASE("sym_eigen residuals, orthonormality and reconstruction", "[numerics]") {
    Rng rng(3);
    const Matrix a = random_symmetric(5, rng);
    const SymEigen e = sym_eigen(a);

    REQUIRE(std::is_sorted(e.values.begin(), e.values.end()));
    // A v = lambda v per component
    for (std::size_t j = 0; j < 5; ++j) {
        for (std::size_t i = 0; i < 5; ++i) {
            double av = 0.0;
            for (std::size_t p = 0; p < 5; ++p) av += a(i, p) * e.vectors(p, j);
            CHECK(av == Catch::Approx(e.values[j] * e.vectors(i, j)).margin(1e-8));
        }
    }
    // V^T V = I
    const Matrix vtv = transpose(e.vectors) * e.vectors;
    CHECK(max_abs_diff(vtv, Matrix::identity(5)) < 1e-8);
    // A = V diag(lambda) V^T entrywise
    Matrix scaled = e.vectors;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) scaled(i, j) *= e.values[j];
    const Matrix recon = scaled * transpose(e.vectors);
    CHECK(max_abs_diff(recon, a) < 1e-8);
}

TEST_CASE("sym_eigen trace and determinant invariants", "[numerics]") {
    Rng rng(13);
    for (int rep = 0; rep < 5; ++rep) {
        const std::size_t n = 3 + static_cast<std::size_t>(rep % 3);
        const Matrix a = random_symmetric(n, rng);
        const SymEigen e = sym_eigen(a);
        double sum = 0.0;
        for (double v : e.values) sum += v;
        CHECK(std::abs(sum - trace(a)) < 1e-8 * static_cast<double>(n));
    }
    // determinant check on analytic 2x2 and 3x3
    Matrix two(2, 2);
    two(0, 0) = 4.0;
    two(0, 1) = 1.0;
    two(1, 0) = 1.0;
    two(1, 1) = 3.0;
    const double det2 = 4.0 * 3.0 - 1.0 * 1.0;
    const SymEigen e2 = sym_eigen(two);
    CHECK(e2.values[0] * e2.values[1] == Catch::Approx(det2).margin(1e-8));

    Matrix three(3, 3, 0.0);
    three(0, 0) = 2.0;
    three(1, 1) = 5.0;
    three(2, 2) = 7.0;
    three(0, 1) = three(1, 0) = 1.0;
    const double det3 = 2.0 * (5.0 * 7.0) - 1.0 * (1.0 * 7.0);
    const SymEigen e3 = sym_eigen(three);
    CHECK(e3.values[0] * e3.values[1] * e3.values[2] == Catch::Approx(det3).margin(1e-8));
}

TEST_CASE("sym_eigen input validation", "[numerics]") {
    CHECK_THROWS_AS(sym_eigen(Matrix(2, 3)), DimensionError);
    Matrix asym(2, 2, 0.0);
    asym(0, 1) = 1.0;
    asym(1, 0) = 0.5;
    CHECK_THROWS_AS(sym_eigen(asym), DomainError);
}

TEST_CASE("he_normal_init determinism and moments", "[numerics]") {
    const Matrix a = he_normal_init(100, 100, 50, 42);
    const Matrix b = he_normal_init(100, 100, 50, 42);
    CHECK(a.data() == b.data());  // bitwise

    double mean = 0.0;
    for (double x : a.data()) mean += x;
    mean /= static_cast<double>(a.size());
    CHECK(std::abs(mean) < 0.01);

    double var = 0.0;
    for (double x : a.data()) var += (x - mean) * (x - mean);
    var /= static_cast<double>(a.size());
    CHECK(var == Catch::Approx(2.0 / 50.0).epsilon(0.10));

    CHECK_THROWS_AS(he_normal_init(2, 2, 0, 1), ValueError);
}

TEST_CASE("adam_step zero gradient is a no-op", "[numerics]") {
    Matrix params(2, 3, 1.5);
    const Matrix before = params;
    Matrix grads(2, 3, 0.0);
    AdamState state(params.size());
    adam_step(params, grads, state, 1e-3);
    CHECK(params.data() == before.data());
    CHECK(state.step == 1);
}

TEST_CASE("adam_step first-step magnitude equals the learning rate", "[numerics]") {
    // evaluate the recurrence by hand at t=1: m_hat = g, v_hat = g^2, so the
    // update is lr * g / (|g| + eps); with |g| >= 10 the relative deviation
    // from lr stays below 1e-9
    Rng rng(5);
    Matrix params(4, 4, 0.0);
    Matrix grads(4, 4);
    for (double& g : grads.data()) {
        const double mag = 10.0 + 90.0 * rng.next_double();
        g = rng.next_double() < 0.5 ? -mag : mag;
    }
    AdamState state(params.size());
    const double lr = 3e-4;
    adam_step(params, grads, state, lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double update = std::abs(params.data()[i]);
        CHECK(std::abs(update - lr) / lr < 1e-9);
        // sign opposes the gradient
        CHECK(params.data()[i] * grads.data()[i] < 0.0);
    }
}

TEST_CASE("adam_step is deterministic and pure", "[numerics]") {
    Rng rng(9);
    Matrix p1(3, 3), g1(3, 3);
    for (double& x : p1.data()) x = rng.next_gaussian();
    for (double& x : g1.data()) x = rng.next_gaussian();
    Matrix p2 = p1;
    AdamState s1(p1.size()), s2(p2.size());
    for (int step = 0; step < 17; ++step) {
        adam_step(p1, g1, s1, 1e-2);
        adam_step(p2, g1, s2, 1e-2);
    }
    CHECK(p1.data() == p2.data());
    CHECK(s1.m == s2.m);
    CHECK(s1.v == s2.v);
    CHECK(s1.step == 17);

    Matrix bad(2, 2);
    AdamState s3;
    CHECK_THROWS_AS(adam_step(p1, bad, s3, 1e-2), DimensionError);
}

TEST_CASE("rng streams are reproducible and derive distinct substreams", "[numerics]") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng d0 = Rng::derive(123, 0);
    Rng d1 = Rng::derive(123, 1);
    CHECK(d0.next_u64() != d1.next_u64());
}
