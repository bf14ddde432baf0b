#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "mesc/data.hpp"
#include "mesc/errors.hpp"
#include "mesc/matrix.hpp"

namespace mesc {

struct MetricsReport {
    double acc_percent = 0.0;
    double nmi_percent = 0.0;
    double homogeneity = 0.0;
    double completeness = 0.0;
};

struct BlockDiagnostics {
    std::vector<double> per_block_variance;  // one per ground-truth block
    double offblock_mass = 0.0;              // in [0, 1]
    double cosine_to_ideal = 0.0;            // in [-1, 1]
};

/// Minimum-cost assignment on a square cost matrix (Kuhn-Munkres via shortest
/// augmenting paths, O(k^3)). Returns the column assigned to each row. Ties are
/// resolved by the ascending row-then-column scan order.
inline std::vector<std::size_t> hungarian(const Matrix& cost) {
    if (cost.rows() != cost.cols()) {
        throw ValueError("hungarian: cost matrix must be square, got " + cost.shape_str());
    }
    for (double x : cost.data()) {
        if (!std::isfinite(x)) throw ValueError("hungarian: cost entries must be finite");
    }
    const std::size_t n = cost.rows();
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; p[j] is the row matched to column j, column 0 is virtual
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= n; ++j) {
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    }
    return row_to_col;
}

namespace detail {

inline void require_label_pair(const std::vector<int>& y, const std::vector<int>& yhat,
                               const char* op) {
    if (y.size() != yhat.size()) {
        throw ValueError(std::string(op) + ": label vectors differ in length (" +
                         std::to_string(y.size()) + " vs " + std::to_string(yhat.size()) + ")");
    }
    if (y.empty()) throw ValueError(std::string(op) + ": label vectors must be nonempty");
}

/// Remaps arbitrary label values to dense 0-based ids, preserving order of value.
inline std::vector<std::size_t> dense_ids(const std::vector<int>& labels, std::size_t& k_out) {
    std::map<int, std::size_t> ids;
    for (int v : labels) ids.emplace(v, 0);
    std::size_t next = 0;
    for (auto& kv : ids) kv.second = next++;
    std::vector<size_t> out;
    out.reserve(labels.size());
    for (int v : labels) out.push_back(ids[v]);
    k_out = next;
    return out;
}

/// Contingency counts, true classes by rows and predicted clusters by columns.
inline Matrix contingency(const std::vector<std::size_t>& y, std::size_t ky,
                          const std::vector<std::size_t>& yhat, std::size_t kyhat) {
    Matrix counts(ky, kyhat, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) counts(y[i], yhat[i]) += 1.0;
    return counts;
}

inline double entropy_of_counts(const std::vector<double>& counts, double n) {
    double h = 0.0;
    for (double c : counts) {
        if (c > 0.0) {
            const double p = c / n;
            h -= p * std::log(p);
        }
    }
    return h;
}

}  // namespace detail

/// Clustering accuracy in percent: the fraction matched under the best
/// one-to-one mapping between predicted clusters and true classes, found by
/// the Kuhn-Munkres assignment on the (zero-padded square) contingency matrix.
inline double accuracy(const std::vector<int>& y, const std::vector<int>& yhat) {
    detail::require_label_pair(y, yhat, "accuracy");
    std::size_t ky = 0, kp = 0;
    const auto yd = detail::dense_ids(y, ky);
    const auto pd = detail::dense_ids(yhat, kp);
    const std::size_t k = std::max(ky, kp);
    Matrix cost(k, k, 0.0);
    for (std::size_t i = 0; i < yd.size(); ++i) cost(yd[i], pd[i]) -= 1.0;  // maximize matches
    const auto assign = hungarian(cost);
    double matched = 0.0;
    for (std::size_t r = 0; r < k; ++r) matched -= cost(r, assign[r]);
    return 100.0 * matched / static_cast<double>(y.size());
}

/// Normalized mutual information in percent: I(Y; Yhat) / max(H(Y), H(Yhat)).
/// When both entropies vanish the partitions are both single clusters and the
/// score is 100 by convention.
inline double nmi(const std::vector<int>& y, const std::vector<int>& yhat) {
    detail::require_label_pair(y, yhat, "nmi");
    std::size_t ky = 0, kp = 0;
    const auto yd = detail::dense_ids(y, ky);
    const auto pd = detail::dense_ids(yhat, kp);
    const double n = static_cast<double>(y.size());
    const Matrix joint = detail::contingency(yd, ky, pd, kp);
    std::vector<double> row(ky, 0.0), col(kp, 0.0);
    for (std::size_t i = 0; i < ky; ++i)
        for (std::size_t j = 0; j < kp; ++j) {
            row[i] += joint(i, j);
            col[j] += joint(i, j);
        }
    const double hy = detail::entropy_of_counts(row, n);
    const double hp = detail::entropy_of_counts(col, n);
    const double hmax = std::max(hy, hp);
    if (hmax == 0.0) return 100.0;  // both partitions are a single cluster
    double mi = 0.0;
    for (std::size_t i = 0; i < ky; ++i) {
        for (std::size_t j = 0; j < kp; ++j) {
            const double nij = joint(i, j);
            if (nij > 0.0) mi += (nij / n) * std::log(nij * n / (row[i] * col[j]));
        }
    }
    return 100.0 * mi / hmax;
}

/// Homogeneity h = 1 - H(Y|Yhat)/H(Y), completeness c = 1 - H(Yhat|Y)/H(Yhat),
/// both with the 0/0 := 1 convention for degenerate entropies.
inline std::pair<double, double> homogeneity_completeness(const std::vector<int>& y,
                                                          const std::vector<int>& yhat) {
    detail::require_label_pair(y, yhat, "homogeneity_completeness");
    std::size_t ky = 0, kp = 0;
    const auto yd = detail::dense_ids(y, ky);
    const auto pd = detail::dense_ids(yhat, kp);
    const double n = static_cast<double>(y.size());
    const Matrix joint = detail::contingency(yd, ky, pd, kp);
    std::vector<double> row(ky, 0.0), col(kp, 0.0);
    for (std::size_t i = 0; i < ky; ++i)
        for (std::size_t j = 0; j < kp; ++j) {
            row[i] += joint(i, j);
            col[j] += joint(i, j);
        }
    const double hy = detail::entropy_of_counts(row, n);
    const double hp = detail::entropy_of_counts(col, n);
    double h_y_given_p = 0.0, h_p_given_y = 0.0;
    for (std::size_t i = 0; i < ky; ++i) {
        for (std::size_t j = 0; j < kp; ++j) {
            const double nij = joint(i, j);
            if (nij > 0.0) {
                h_y_given_p -= (nij / n) * std::log(nij / col[j]);
                h_p_given_y -= (nij / n) * std::log(nij / row[i]);
            }
        }
    }
    const double homogeneity = hy == 0.0 ? 1.0 : 1.0 - h_y_given_p / hy;
    const double completeness = hp == 0.0 ? 1.0 : 1.0 - h_p_given_y / hp;
    return {homogeneity, completeness};
}

/// Affinity-structure diagnostics against the ground-truth blocks. Connection
/// strengths |C| are min-max normalized first (magnitudes are what the
/// spectral step consumes; the baselines' signed coefficients would otherwise
/// shift the global minimum and drown the structure in a constant offset).
/// The ideal reference is 1 within blocks and 0 outside.
inline BlockDiagnostics block_diagnostics(const Matrix& c, const std::vector<int>& y) {
    if (c.rows() != c.cols()) throw DimensionError("block_diagnostics requires square C");
    if (y.size() != c.rows()) {
        throw ValueError("block_diagnostics: labels length " + std::to_string(y.size()) +
                         " does not match affinity dimension " + std::to_string(c.rows()));
    }
    std::size_t k = 0;
    const auto ids = detail::dense_ids(y, k);
    Matrix magnitudes = c;
    for (double& x : magnitudes.data()) x = std::abs(x);
    const Matrix norm = minmax_normalize(magnitudes);
    const std::size_t n = c.rows();

    BlockDiagnostics diag;
    diag.per_block_variance.assign(k, 0.0);
    std::vector<double> block_sum(k, 0.0), block_sumsq(k, 0.0), block_count(k, 0.0);
    double total = 0.0, within = 0.0, dot_ideal = 0.0, norm_sq = 0.0;
    std::size_t ideal_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double x = norm(i, j);
            total += x;
            norm_sq += x * x;
            if (ids[i] == ids[j]) {
                const std::size_t b = ids[i];
                block_sum[b] += x;
                block_sumsq[b] += x * x;
                block_count[b] += 1.0;
                within += x;
                dot_ideal += x;
                ++ideal_count;
            }
        }
    }
    for (std::size_t b = 0; b < k; ++b) {
        const double cnt = block_count[b];
        const double mean = block_sum[b] / cnt;
        diag.per_block_variance[b] = block_sumsq[b] / cnt - mean * mean;
    }
    diag.offblock_mass = total > 0.0 ? (total - within) / total : 0.0;
    const double denom = std::sqrt(norm_sq) * std::sqrt(static_cast<double>(ideal_count));
    diag.cosine_to_ideal = denom > 0.0 ? dot_ideal / denom : 0.0;
    return diag;
}

}  // namespace mesc
