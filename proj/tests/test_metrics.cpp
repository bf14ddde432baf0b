#include "catch_amalgamated.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "mesc/metrics.hpp"
#include "mesc/rng.hpp"

using namespace mesc;

namespace {

// factorial brute force over all mappings from predicted clusters to classes
double accuracy_brute(const std::vector<int>& y, const std::vector<int>& yhat) {
    std::map<int, std::size_t> ymap, pmap;
    for (int v : y) ymap.emplace(v, 0);
    for (int v : yhat) pmap.emplace(v, 0);
    std::size_t next = 0;
    for (auto& kv : ymap) kv.second = next++;
    const std::size_t ky = next;
    next = 0;
    for (auto& kv : pmap) kv.second = next++;
    const std::size_t kp = next;
    const std::size_t k = std::max(ky, kp);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    do {
        std::size_t matched = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (perm[pmap[yhat[i]]] == ymap[y[i]]) ++matched;
        }
        best = std::max(best, matched);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return 100.0 * static_cast<double>(best) / static_cast<double>(y.size());
}

// direct evaluation of the NMI formula from joint and marginal counts
double nmi_direct(const std::vector<int>& y, const std::vector<int>& yhat) {
    const double n = static_cast<double>(y.size());
    std::map<int, double> py, pp;
    std::map<std::pair<int, int>, double> joint;
    for (std::size_t i = 0; i < y.size(); ++i) {
        py[y[i]] += 1.0;
        pp[yhat[i]] += 1.0;
        joint[{y[i], yhat[i]}] += 1.0;
    }
    double hy = 0.0, hp = 0.0, mi = 0.0;
    for (auto& [label, cnt] : py) hy -= (cnt / n) * std::log(cnt / n);
    for (auto& [label, cnt] : pp) hp -= (cnt / n) * std::log(cnt / n);
    for (auto& [pair, cnt] : joint) {
        mi += (cnt / n) * std::log((cnt * n) / (py[pair.first] * pp[pair.second]));
    }
    const double hmax = std::max(hy, hp);
    if (hmax == 0.0) return 100.0;
    return 100.0 * mi / hmax;
}

double hungarian_cost(const Matrix& cost, const std::vector<std::size_t>& assign) {
    double total = 0.0;
    for (std::size_t i = 0; i < assign.size(); ++i) total += cost(i, assign[i]);
    return total;
}

double hungarian_brute(const Matrix& cost) {
    const std::size_t n = cost.rows();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        best = std::min(best, hungarian_cost(cost, perm));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

TEST_CASE("hungarian solves small assignments", "[metrics]") {
    Matrix diag_cost(3, 3, 5.0);
    diag_cost(0, 0) = diag_cost(1, 1) = diag_cost(2, 2) = 1.0;
    const auto assign = hungarian(diag_cost);
    CHECK(assign == std::vector<std::size_t>{0, 1, 2});

    Rng rng(3);
    Matrix cost(3, 3);
    for (double& x : cost.data()) x = std::floor(10.0 * rng.next_double());
    CHECK(hungarian_cost(cost, hungarian(cost)) == Catch::Approx(hungarian_brute(cost)));

    // adding a constant to one row leaves the assignment structure unchanged
    Matrix unique_cost(3, 3);
    for (double& x : unique_cost.data()) x = rng.next_double();
    const auto before = hungarian(unique_cost);
    for (std::size_t j = 0; j < 3; ++j) unique_cost(1, j) += 7.5;
    CHECK(hungarian(unique_cost) == before);

    CHECK_THROWS_AS(hungarian(Matrix(2, 3)), ValueError);
}

TEST_CASE("hungarian matches brute force on random matrices up to k = 6", "[metrics]") {
    Rng rng(99);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t k = 2 + static_cast<std::size_t>(rng.next_double() * 5);
        Matrix cost(k, k);
        for (double& x : cost.data()) x = rng.next_gaussian();
        const double got = hungarian_cost(cost, hungarian(cost));
        CHECK(got == Catch::Approx(hungarian_brute(cost)).margin(1e-10));
    }
}

TEST_CASE("accuracy analytic cases", "[metrics]") {
    CHECK(accuracy({0, 0, 1, 1}, {1, 1, 0, 0}) == Catch::Approx(100.0));
    CHECK(accuracy({0, 0, 1, 1}, {0, 1, 0, 1}) == Catch::Approx(50.0));
    CHECK(accuracy({0, 1, 2}, {2, 0, 1}) == Catch::Approx(100.0));
    CHECK_THROWS_AS(accuracy({0, 1}, {0}), ValueError);
    CHECK_THROWS_AS(accuracy({}, {}), ValueError);
}

TEST_CASE("accuracy matches the factorial brute force", "[metrics]") {
    Rng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 4 + static_cast<std::size_t>(rng.next_double() * 5);
        std::vector<int> y(n), yhat(n);
        for (auto& v : y) v = static_cast<int>(rng.next_double() * 4);
        for (auto& v : yhat) v = static_cast<int>(rng.next_double() * 4);
        CHECK(accuracy(y, yhat) == Catch::Approx(accuracy_brute(y, yhat)).margin(1e-10));
    }
}

TEST_CASE("accuracy is invariant under relabelings", "[metrics]") {
    Rng rng(7);
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<int> y(10), yhat(10);
        for (auto& v : y) v = static_cast<int>(rng.next_double() * 3);
        for (auto& v : yhat) v = static_cast<int>(rng.next_double() * 3);
        const double base = accuracy(y, yhat);
        std::vector<int> remap_y = y, remap_p = yhat;
        for (auto& v : remap_y) v = (v * 7 + 11) % 101;  // injective relabeling
        for (auto& v : remap_p) v = 2 - v;
        CHECK(accuracy(remap_y, remap_p) == Catch::Approx(base).margin(1e-12));
        CHECK(accuracy(y, y) == Catch::Approx(100.0));
    }
}

TEST_CASE("nmi analytic and derived cases", "[metrics]") {
    CHECK(nmi({0, 1, 0, 2}, {0, 1, 0, 2}) == Catch::Approx(100.0));
    CHECK(nmi({0, 1, 0, 1}, {1, 1, 1, 1}) == Catch::Approx(0.0).margin(1e-12));

    // direct evaluation of the formula for this case gives ~31.13%
    const std::vector<int> y{0, 0, 1, 1}, yhat{0, 1, 1, 1};
    const double direct = nmi_direct(y, yhat);
    CHECK(nmi(y, yhat) == Catch::Approx(direct).margin(1e-10));
    CHECK(direct == Catch::Approx(31.1278124459133).margin(1e-4));

    // symmetry
    Rng rng(15);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<int> a(12), b(12);
        for (auto& v : a) v = static_cast<int>(rng.next_double() * 4);
        for (auto& v : b) v = static_cast<int>(rng.next_double() * 3);
        CHECK(nmi(a, b) == Catch::Approx(nmi(b, a)).margin(1e-12));
        CHECK(nmi(a, a) == Catch::Approx(100.0));
    }
    // both single clusters: identical partitions by convention
    CHECK(nmi({3, 3, 3}, {5, 5, 5}) == Catch::Approx(100.0));
}

TEST_CASE("homogeneity and completeness", "[metrics]") {
    const auto [h1, c1] = homogeneity_completeness({0, 1, 0, 1}, {0, 1, 0, 1});
    CHECK(h1 == Catch::Approx(1.0));
    CHECK(c1 == Catch::Approx(1.0));

    // one big cluster holds everything: not homogeneous, trivially complete
    const auto [h2, c2] = homogeneity_completeness({0, 0, 1, 1}, {0, 0, 0, 0});
    CHECK(h2 == Catch::Approx(0.0).margin(1e-12));
    CHECK(c2 == Catch::Approx(1.0));

    // singletons are perfectly homogeneous but incomplete; conditional-entropy
    // oracle: H(Y|Yhat) = 0 and H(Yhat|Y) = ln 2 per class of size 2
    const std::vector<int> y{0, 0, 1, 1}, singletons{0, 1, 2, 3};
    const auto [h3, c3] = homogeneity_completeness(y, singletons);
    CHECK(h3 == Catch::Approx(1.0));
    const double expected_c = 1.0 - std::log(2.0) / std::log(4.0);
    CHECK(c3 == Catch::Approx(expected_c).margin(1e-12));
    CHECK(c3 < 1.0);

    CHECK_THROWS_AS(homogeneity_completeness({0, 1}, {0}), ValueError);
}

TEST_CASE("block_diagnostics on the ideal matrix", "[metrics]") {
    const std::vector<int> labels{0, 0, 1, 1, 2, 2};
    Matrix ideal(6, 6, 0.0);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            if (labels[i] == labels[j]) ideal(i, j) = 1.0;
    const BlockDiagnostics diag = block_diagnostics(ideal, labels);
    for (double v : diag.per_block_variance) CHECK(v == Catch::Approx(0.0).margin(1e-15));
    CHECK(diag.offblock_mass == Catch::Approx(0.0).margin(1e-15));
    CHECK(diag.cosine_to_ideal == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("block_diagnostics of the identity with two equal blocks", "[metrics]") {
    // closed form: <I, B> = 2m, ||I||_F = sqrt(2m), ||B||_F = m sqrt(2), so the
    // cosine is 2m / (sqrt(2m) * m sqrt(2)) = 1/sqrt(m)
    for (std::size_t m : {2UL, 4UL, 8UL}) {
        const std::size_t n = 2 * m;
        std::vector<int> labels(n, 0);
        for (std::size_t i = m; i < n; ++i) labels[i] = 1;
        const BlockDiagnostics diag = block_diagnostics(Matrix::identity(n), labels);
        CHECK(diag.cosine_to_ideal ==
              Catch::Approx(1.0 / std::sqrt(static_cast<double>(m))).margin(1e-12));
        CHECK(diag.offblock_mass == Catch::Approx(0.0).margin(1e-15));
    }
}

TEST_CASE("block_diagnostics is invariant under block-respecting permutations", "[metrics]") {
    Rng rng(31);
    const std::vector<int> labels{0, 0, 0, 1, 1, 1};
    Matrix c(6, 6);
    for (double& x : c.data()) x = rng.next_double();
    const BlockDiagnostics base = block_diagnostics(c, labels);

    // swap samples 0 and 2 (same block) and 3 and 5 (same block)
    const std::vector<std::size_t> perm{2, 1, 0, 5, 4, 3};
    Matrix permuted(6, 6);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) permuted(i, j) = c(perm[i], perm[j]);
    const BlockDiagnostics moved = block_diagnostics(permuted, labels);
    for (std::size_t b = 0; b < 2; ++b) {
        CHECK(moved.per_block_variance[b] ==
              Catch::Approx(base.per_block_variance[b]).margin(1e-12));
    }
    CHECK(moved.offblock_mass == Catch::Approx(base.offblock_mass).margin(1e-12));
    CHECK(moved.cosine_to_ideal == Catch::Approx(base.cosine_to_ideal).margin(1e-12));

    CHECK_THROWS_AS(block_diagnostics(c, std::vector<int>{0, 1}), ValueError);
    CHECK_THROWS_AS(block_diagnostics(Matrix(2, 3), std::vector<int>{0, 1}), DimensionError);
}

TEST_CASE("block_diagnostics cosine stays in [0, 1] for nonnegative input", "[metrics]") {
    Rng rng(37);
    for (int rep = 0; rep < 20; ++rep) {
        Matrix c(8, 8);
        for (double& x : c.data()) x = rng.next_double();
        std::vector<int> labels(8);
        for (auto& v : labels) v = static_cast<int>(rng.next_double() * 3);
        const BlockDiagnostics diag = block_diagnostics(c, labels);
        CHECK(diag.cosine_to_ideal >= 0.0);
        CHECK(diag.cosine_to_ideal <= 1.0 + 1e-12);
        CHECK(diag.offblock_mass >= 0.0);
        CHECK(diag.offblock_mass <= 1.0);
    }
}
