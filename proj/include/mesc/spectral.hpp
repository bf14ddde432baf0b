#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "mesc/eigen.hpp"
#include "mesc/errors.hpp"
#include "mesc/matrix.hpp"
#include "mesc/rng.hpp"

namespace mesc {

struct ClusterAssignment {
    std::vector<int> labels;  // one index in {0..k-1} per sample
    std::size_t k = 0;
};

/// W = (|C| + |C^T|) / 2, the symmetric nonnegative graph of an affinity matrix.
inline Matrix symmetrize(const Matrix& c) {
    if (c.rows() != c.cols()) throw DimensionError("symmetrize requires a square matrix");
    const std::size_t n = c.rows();
    Matrix w(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            w(i, j) = 0.5 * (std::abs(c(i, j)) + std::abs(c(j, i)));
    return w;
}

struct LaplacianResult {
    Matrix matrix;
    std::vector<std::size_t> isolated_vertices;  // zero-degree rows, D^{-1/2} taken as 0
};

/// Normalized Laplacian L = I - D^{-1/2} W D^{-1/2} of a symmetric nonnegative W.
inline LaplacianResult normalized_laplacian(const Matrix& w) {
    if (w.rows() != w.cols()) throw DimensionError("normalized_laplacian requires square W");
    const std::size_t n = w.rows();
    LaplacianResult out{Matrix(n, n, 0.0), {}};
    std::vector<double> dinv(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double degree = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (w(i, j) < 0.0) throw DomainError("normalized_laplacian: negative weight");
            degree += w(i, j);
        }
        if (degree > 0.0) {
            dinv[i] = 1.0 / std::sqrt(degree);
        } else {
            out.isolated_vertices.push_back(i);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            // grouping dinv[i]*dinv[j] first keeps L bitwise symmetric
            const double off = w(i, j) * (dinv[i] * dinv[j]);
            out.matrix(i, j) = (i == j ? 1.0 - off : -off);
        }
    }
    return out;
}

namespace detail {

struct LloydResult {
    std::vector<int> labels;
    double inertia = 0.0;
    std::vector<double> inertia_trace;  // one value per Lloyd iteration
};

inline double sq_dist_row(const Matrix& pts, std::size_t row, const std::vector<double>& center,
                          std::size_t dim) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
        const double diff = pts(row, d) - center[d];
        s += diff * diff;
    }
    return s;
}

/// Lloyd iterations from explicit initial centroids; assignment ties and empty
/// clusters are resolved deterministically (lowest index / farthest point).
inline LloydResult lloyd(const Matrix& pts, std::size_t k, std::vector<std::vector<double>> centers,
                         std::size_t max_iter = 200) {
    const std::size_t n = pts.rows(), dim = pts.cols();
    LloydResult res;
    res.labels.assign(n, 0);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        bool changed = iter == 0;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double d2 = sq_dist_row(pts, i, centers[c], dim);
                if (d2 < best) {
                    best = d2;
                    best_c = static_cast<int>(c);
                }
            }
            if (res.labels[i] != best_c) changed = true;
            res.labels[i] = best_c;
            inertia += best;
        }
        res.inertia = inertia;
        res.inertia_trace.push_back(inertia);
        if (!changed && iter > 0) break;

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(res.labels[i]);
            ++counts[c];
            for (std::size_t d = 0; d < dim; ++d) sums[c][d] += pts(i, d);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // revive on the point farthest from its current centroid
                double worst = -1.0;
                std::size_t worst_i = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    const auto ci = static_cast<std::size_t>(res.labels[i]);
                    const double d2 = sq_dist_row(pts, i, centers[ci], dim);
                    if (d2 > worst) {
                        worst = d2;
                        worst_i = i;
                    }
                }
                for (std::size_t d = 0; d < dim; ++d) centers[c][d] = pts(worst_i, d);
            } else {
                for (std::size_t d = 0; d < dim; ++d)
                    centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
            }
        }
    }
    return res;
}

/// Distance-weighted (k-means++ style) seeding, driven by the supplied stream.
inline std::vector<std::vector<double>> seed_centers(const Matrix& pts, std::size_t k, Rng& rng) {
    const std::size_t n = pts.rows(), dim = pts.cols();
    std::vector<std::vector<double>> centers;
    centers.reserve(k);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = static_cast<std::size_t>(rng.next_double() * static_cast<double>(n));
    if (first >= n) first = n - 1;
    centers.push_back(std::vector<double>(dim));
    for (std::size_t d = 0; d < dim; ++d) centers[0][d] = pts(first, d);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist_row(pts, i, centers[c - 1], dim));
            total += d2[i];
        }
        std::size_t chosen = 0;
        if (total > 0.0) {
            const double target = rng.next_double() * total;
            double acc = 0.0;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = c % n;  // all points coincide with chosen centers
        }
        centers.push_back(std::vector<double>(dim));
        for (std::size_t d = 0; d < dim; ++d) centers[c][d] = pts(chosen, d);
    }
    return centers;
}

}  // namespace detail

/// k-means on the rows of `points` with k-means++ seeding and `restarts`
/// independent restarts; returns the assignment with the lowest within-cluster
/// sum of squares (ties go to the earliest restart). Deterministic per seed.
inline ClusterAssignment kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                                std::size_t restarts = 10) {
    const std::size_t n = points.rows();
    if (k == 0) throw ValueError("kmeans: k must be at least 1");
    if (k > n) {
        throw ValueError("kmeans: k = " + std::to_string(k) + " exceeds the number of points " +
                         std::to_string(n));
    }
    if (!all_finite(points)) throw DomainError("kmeans: points must be finite");
    if (restarts == 0) restarts = 1;

    detail::LloydResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < restarts; ++r) {
        Rng stream = Rng::derive(seed, r);
        auto centers = detail::seed_centers(points, k, stream);
        auto res = detail::lloyd(points, k, std::move(centers));
        if (res.inertia < best.inertia) best = std::move(res);
    }
    return ClusterAssignment{std::move(best.labels), k};
}

/// Full spectral clustering of an affinity matrix: symmetrize, normalized
/// Laplacian, embedding by the k eigenvectors of the smallest eigenvalues,
/// row normalization, then k-means.
inline ClusterAssignment spectral_cluster(const Matrix& c, std::size_t k, std::uint64_t seed,
                                          std::size_t restarts = 10) {
    if (k < 2) throw ValueError("spectral_cluster: k must be at least 2");
    const Matrix w = symmetrize(c);
    const LaplacianResult lap = normalized_laplacian(w);
    const SymEigen eig = sym_eigen(lap.matrix);
    const std::size_t n = w.rows();
    if (k > n) throw ValueError("spectral_cluster: k exceeds the number of samples");
    Matrix embedding(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            embedding(i, j) = eig.vectors(i, j);
            norm += embedding(i, j) * embedding(i, j);
        }
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (std::size_t j = 0; j < k; ++j) embedding(i, j) /= norm;
        }
    }
    return kmeans(embedding, k, seed, restarts);
}

}  // namespace mesc
