#pragma once

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mesc/errors.hpp"
#include "mesc/matrix.hpp"
#include "mesc/rng.hpp"

namespace mesc {

/// Parameters of the synthetic independent-subspace generator. Independence is
/// enforced structurally: sum(dims) <= ambient and the concatenated basis is
/// orthonormal, so distinct subspaces intersect only at the origin.
struct SyntheticSpec {
    std::size_t k = 3;
    std::vector<std::size_t> dims{3, 3, 3};    // d_i, one per subspace
    std::vector<std::size_t> counts{40, 40, 40};  // n_i, one per subspace
    std::size_t ambient = 30;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    std::size_t total_samples() const {
        return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    }

    void validate() const {
        if (k == 0) throw ValueError("synthetic spec: k must be at least 1");
        if (dims.size() != k || counts.size() != k) {
            throw ValueError("synthetic spec: dims and counts must each list k entries");
        }
        std::size_t dim_sum = 0;
        for (std::size_t i = 0; i < k; ++i) {
            if (dims[i] == 0) throw ValueError("synthetic spec: every d_i must be at least 1");
            if (counts[i] < dims[i]) {
                throw ValueError("synthetic spec: n_i must be at least d_i (block " +
                                 std::to_string(i) + ")");
            }
            dim_sum += dims[i];
        }
        if (dim_sum > ambient) {
            throw ValueError("synthetic spec infeasible: sum of subspace dims " +
                             std::to_string(dim_sum) + " exceeds ambient dimension " +
                             std::to_string(ambient));
        }
        if (noise_sigma < 0.0) throw ValueError("synthetic spec: noise_sigma must be >= 0");
    }
};

struct LabeledFeatures {
    Matrix z;                 // ambient x n, one column per sample
    std::vector<int> labels;  // block index per sample, 0-based
};

struct Dataset {
    Matrix x;                 // features (d x n) or flattened pixels (side^2 x n)
    std::vector<int> labels;
    bool images = false;
    std::size_t side = 0;     // image side length when images == true
};

namespace detail {

/// Orthonormalizes the columns of a (rows >= cols) in place by modified
/// Gram-Schmidt with one re-orthogonalization pass.
inline void orthonormalize_columns(Matrix& a) {
    const std::size_t rows = a.rows(), cols = a.cols();
    for (std::size_t j = 0; j < cols; ++j) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t p = 0; p < j; ++p) {
                double dot = 0.0;
                for (std::size_t i = 0; i < rows; ++i) dot += a(i, p) * a(i, j);
                for (std::size_t i = 0; i < rows; ++i) a(i, j) -= dot * a(i, p);
            }
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < rows; ++i) norm += a(i, j) * a(i, j);
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw DomainError("orthonormalize_columns: rank-deficient draw");
        for (std::size_t i = 0; i < rows; ++i) a(i, j) /= norm;
    }
}

}  // namespace detail

/// Draws a random orthonormal basis, partitions its columns across the k
/// subspaces, fills each block with standard-normal coefficient combinations
/// of its basis and finally adds isotropic noise of scale noise_sigma.
inline LabeledFeatures gen_subspaces(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t total_dims = std::accumulate(spec.dims.begin(), spec.dims.end(),
                                                   std::size_t{0});
    const std::size_t n = spec.total_samples();
    Rng rng(spec.seed);

    Matrix basis(spec.ambient, total_dims);
    for (double& v : basis.data()) v = rng.next_gaussian();
    detail::orthonormalize_columns(basis);

    LabeledFeatures out{Matrix(spec.ambient, n), {}};
    out.labels.reserve(n);
    std::size_t col = 0, basis_col = 0;
    for (std::size_t b = 0; b < spec.k; ++b) {
        const std::size_t di = spec.dims[b], ni = spec.counts[b];
        Matrix coeff(di, ni);
        for (double& v : coeff.data()) v = rng.next_gaussian();
        for (std::size_t j = 0; j < ni; ++j) {
            for (std::size_t i = 0; i < spec.ambient; ++i) {
                double s = 0.0;
                for (std::size_t p = 0; p < di; ++p) s += basis(i, basis_col + p) * coeff(p, j);
                out.z(i, col + j) = s;
            }
            out.labels.push_back(static_cast<int>(b));
        }
        col += ni;
        basis_col += di;
    }
    if (spec.noise_sigma > 0.0) {
        for (double& v : out.z.data()) v += spec.noise_sigma * rng.next_gaussian();
    }
    return out;
}

/// Maps (m - min) / (max - min) onto [0, 1]; a constant matrix maps to zeros.
inline Matrix minmax_normalize(const Matrix& m) {
    double lo = m.data()[0], hi = m.data()[0];
    for (double x : m.data()) {
        if (!std::isfinite(x)) throw DomainError("minmax_normalize: non-finite entry");
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    Matrix out = m;
    if (hi == lo) {
        for (double& x : out.data()) x = 0.0;
        return out;
    }
    const double span = hi - lo;
    for (double& x : out.data()) x = (x - lo) / span;
    return out;
}

/// Embeds the synthetic subspace features into side x side grayscale images by
/// a fixed seeded linear map into pixel space, followed by an affine shift into
/// [0, 1] and clipping. Pixel r of sample j sits at row r = y * side + x.
inline Dataset gen_images(const SyntheticSpec& spec, std::size_t side) {
    spec.validate();
    if (side * side < spec.ambient) {
        throw ValueError("gen_images: side^2 = " + std::to_string(side * side) +
                         " must be at least the ambient dimension " +
                         std::to_string(spec.ambient));
    }
    LabeledFeatures feats = gen_subspaces(spec);
    const std::size_t pixels = side * side, n = feats.z.cols();

    Rng map_rng = Rng::derive(spec.seed, 0x70697865);  // pixel-map stream
    Matrix map(pixels, spec.ambient);
    const double map_scale = 1.0 / std::sqrt(static_cast<double>(spec.ambient));
    for (double& v : map.data()) v = map_scale * map_rng.next_gaussian();

    Matrix y = map * feats.z;
    double rms = std::sqrt(frobenius_norm_sq(y) / static_cast<double>(y.size()));
    if (rms == 0.0) rms = 1.0;
    Dataset out{Matrix(pixels, n), std::move(feats.labels), true, side};
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double p = 0.5 + y.data()[i] / (4.0 * rms);
        out.x.data()[i] = std::clamp(p, 0.0, 1.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// File formats
//
// Binary matrix: magic "MESCMAT1", two 32-bit little-endian unsigned dims
// (rows, cols), then rows*cols 64-bit little-endian IEEE doubles, row-major.
// CSV matrix: header line "# <rows> <cols>", then one comma-separated row per
// line, printed with 17 significant digits.
// Labels: one base-10 integer per line, index origin 0.
// Heatmap: plain PGM ("P2"), min-max normalized and quantized to 0..255.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32_le(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64_le(std::string& buf, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline double get_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in.good() && !in.eof()) throw IoError("read failure on '" + path + "'");
    return ss.str();
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out.good()) throw IoError("write failure on '" + path + "'");
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(),
                                                  suffix) == 0;
}

}  // namespace detail

inline constexpr char kMatrixMagic[] = "MESCMAT1";

inline void save_matrix_binary(const std::string& path, const Matrix& m) {
    if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
        m.cols() > std::numeric_limits<std::uint32_t>::max()) {
        throw DimensionError("save_matrix_binary: dimensions overflow the 32-bit header");
    }
    std::string buf;
    buf.reserve(16 + 8 * m.size());
    buf.append(kMatrixMagic, 8);
    detail::put_u32_le(buf, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32_le(buf, static_cast<std::uint32_t>(m.cols()));
    for (double d : m.data()) detail::put_f64_le(buf, d);
    detail::write_file_bytes(path, buf);
}

inline Matrix load_matrix_binary(const std::string& path) {
    const std::string bytes = detail::read_file_bytes(path);
    if (bytes.size() < 16) throw ParseError("'" + path + "': truncated header");
    if (std::memcmp(bytes.data(), kMatrixMagic, 8) != 0) {
        throw ParseError("'" + path + "': bad magic, expected MESCMAT1");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t rows = detail::get_u32_le(p + 8);
    const std::uint32_t cols = detail::get_u32_le(p + 12);
    if (rows == 0 || cols == 0) throw ParseError("'" + path + "': zero dimension in header");
    const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
    if (count > (std::numeric_limits<std::size_t>::max() - 16) / 8) {
        throw DimensionError("'" + path + "': dimension overflow " + std::to_string(rows) +
                             "x" + std::to_string(cols));
    }
    const std::size_t expected = 16 + 8 * static_cast<std::size_t>(count);
    if (bytes.size() != expected) {
        throw ParseError("'" + path + "': payload length mismatch, expected " +
                         std::to_string(expected) + " bytes, got " +
                         std::to_string(bytes.size()));
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < count; ++i) m.data()[i] = detail::get_f64_le(p + 16 + 8 * i);
    return m;
}

inline void save_matrix_csv(const std::string& path, const Matrix& m) {
    std::string buf = "# " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
    char num[64];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(num, sizeof(num), "%.17g", m(i, j));
            if (j) buf.push_back(',');
            buf.append(num);
        }
        buf.push_back('\n');
    }
    detail::write_file_bytes(path, buf);
}

inline Matrix load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line) || line.empty() || line[0] != '#') {
        throw ParseError("'" + path + "': missing '# rows cols' header");
    }
    std::istringstream hdr(line.substr(1));
    std::size_t rows = 0, cols = 0;
    if (!(hdr >> rows >> cols) || rows == 0 || cols == 0) {
        throw ParseError("'" + path + "': malformed '# rows cols' header");
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!std::getline(in, line)) {
            throw ParseError("'" + path + "': expected " + std::to_string(rows) +
                             " data rows, got " + std::to_string(i));
        }
        std::istringstream row(line);
        std::string field;
        for (std::size_t j = 0; j < cols; ++j) {
            if (!std::getline(row, field, ',')) {
                throw ParseError("'" + path + "' line " + std::to_string(i + 2) +
                                 ": expected " + std::to_string(cols) + " fields");
            }
            try {
                std::size_t used = 0;
                m(i, j) = std::stod(field, &used);
                while (used < field.size() && std::isspace(static_cast<unsigned char>(field[used])))
                    ++used;
                if (used != field.size()) throw std::invalid_argument(field);
            } catch (const std::exception&) {
                throw ParseError("'" + path + "' line " + std::to_string(i + 2) +
                                 ": unparsable value '" + field + "'");
            }
        }
        if (std::getline(row, field, ',')) {
            throw ParseError("'" + path + "' line " + std::to_string(i + 2) +
                             ": more than " + std::to_string(cols) + " fields");
        }
    }
    return m;
}

/// Dispatches on the file suffix: ".csv" selects the text format, anything
/// else the MESCMAT1 binary format.
inline void save_matrix(const std::string& path, const Matrix& m) {
    if (detail::has_suffix(path, ".csv")) {
        save_matrix_csv(path, m);
    } else {
        save_matrix_binary(path, m);
    }
}

inline Matrix load_matrix(const std::string& path) {
    if (detail::has_suffix(path, ".csv")) return load_matrix_csv(path);
    return load_matrix_binary(path);
}

inline void save_labels(const std::string& path, const std::vector<int>& labels) {
    std::string buf;
    for (int v : labels) {
        buf += std::to_string(v);
        buf.push_back('\n');
    }
    detail::write_file_bytes(path, buf);
}

inline std::vector<int> load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<int> labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            std::size_t used = 0;
            const int v = std::stoi(line, &used);
            while (used < line.size() && std::isspace(static_cast<unsigned char>(line[used])))
                ++used;
            if (used != line.size()) throw std::invalid_argument(line);
            if (v < 0) throw std::invalid_argument(line);
            labels.push_back(v);
        } catch (const std::exception&) {
            throw ParseError("'" + path + "' line " + std::to_string(lineno) +
                             ": expected a nonnegative integer, got '" + line + "'");
        }
    }
    if (labels.empty()) throw ParseError("'" + path + "': no labels found");
    return labels;
}

/// Writes the matrix as a plain (P2) portable graymap, one pixel per entry,
/// min-max normalized and quantized to 0..255.
inline void export_heatmap(const std::string& path, const Matrix& m) {
    const Matrix norm = minmax_normalize(m);
    std::string buf = "P2\n" + std::to_string(m.cols()) + " " + std::to_string(m.rows()) +
                      "\n255\n";
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const int px = static_cast<int>(std::lround(norm(i, j) * 255.0));
            if (j) buf.push_back(' ');
            buf += std::to_string(px);
        }
        buf.push_back('\n');
    }
    detail::write_file_bytes(path, buf);
}

}  // namespace mesc
