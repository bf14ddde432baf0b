#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "mesc/adam.hpp"
#include "mesc/affinity.hpp"
#include "mesc/data.hpp"
#include "mesc/errors.hpp"
#include "mesc/matrix.hpp"
#include "mesc/rng.hpp"

namespace mesc {

/// Sample-major NHWC tensor of 64-bit reals.
struct Tensor {
    std::size_t n = 0, h = 0, w = 0, c = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::size_t n_, std::size_t h_, std::size_t w_, std::size_t c_)
        : n(n_), h(h_), w(w_), c(c_), v(n_ * h_ * w_ * c_, 0.0) {}

    double& at(std::size_t i, std::size_t y, std::size_t x, std::size_t ch) {
        return v[((i * h + y) * w + x) * c + ch];
    }
    double at(std::size_t i, std::size_t y, std::size_t x, std::size_t ch) const {
        return v[((i * h + y) * w + x) * c + ch];
    }
    bool same_shape(const Tensor& o) const {
        return n == o.n && h == o.h && w == o.w && c == o.c;
    }
    std::string shape_str() const {
        return std::to_string(n) + "x" + std::to_string(h) + "x" + std::to_string(w) + "x" +
               std::to_string(c);
    }
};

/// Geometry of one stride-2 convolution with TensorFlow-style SAME padding:
/// out = ceil(in / 2), pad_total = max((out-1)*stride + k - in, 0), and the
/// extra padding row/column (when pad_total is odd) goes to the bottom/right.
struct ConvGeom {
    std::size_t in_h = 0, in_w = 0, in_c = 0;
    std::size_t out_h = 0, out_w = 0, out_c = 0;
    std::size_t k = 0;
    std::size_t stride = 2;
    std::size_t pad_top = 0, pad_left = 0;

    std::size_t kernel_size() const { return k * k * in_c * out_c; }
};

inline ConvGeom make_conv_geom(std::size_t in_h, std::size_t in_w, std::size_t in_c,
                               std::size_t out_c, std::size_t k, std::size_t stride = 2) {
    if (k == 0 || in_c == 0 || out_c == 0) {
        throw ValueError("conv layer: kernel size and channel counts must be at least 1");
    }
    ConvGeom g;
    g.in_h = in_h;
    g.in_w = in_w;
    g.in_c = in_c;
    g.out_c = out_c;
    g.k = k;
    g.stride = stride;
    g.out_h = (in_h + stride - 1) / stride;
    g.out_w = (in_w + stride - 1) / stride;
    const auto pad = [&](std::size_t out, std::size_t in) -> std::size_t {
        const std::size_t span = (out - 1) * stride + k;
        return span > in ? (span - in) / 2 : 0;  // beginning side gets floor(total/2)
    };
    g.pad_top = pad(g.out_h, in_h);
    g.pad_left = pad(g.out_w, in_w);
    return g;
}

/// Encoder/decoder architecture. The encoder is a stack of stride-2 ReLU
/// convolutions; the decoder mirrors it in reverse with transposed convolutions
/// (ReLU on all but the final layer, which is linear) and restores the input
/// shape exactly.
struct NetworkSpec {
    std::size_t input_h = 0, input_w = 0;
    std::vector<ConvGeom> encoder;  // in order of application

    std::size_t latent_h() const { return encoder.back().out_h; }
    std::size_t latent_w() const { return encoder.back().out_w; }
    std::size_t latent_c() const { return encoder.back().out_c; }
    std::size_t latent_dim() const { return latent_h() * latent_w() * latent_c(); }
    std::size_t layers() const { return encoder.size(); }
};

inline NetworkSpec make_network_spec(std::size_t input_h, std::size_t input_w,
                                     const std::vector<std::size_t>& kernels,
                                     const std::vector<std::size_t>& channels) {
    if (input_h == 0 || input_w == 0) throw ValueError("network spec: empty input shape");
    if (kernels.empty() || kernels.size() != channels.size()) {
        throw ValueError("network spec: kernel and channel lists must be nonempty and equal");
    }
    NetworkSpec spec;
    spec.input_h = input_h;
    spec.input_w = input_w;
    std::size_t h = input_h, w = input_w, c = 1;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        ConvGeom g = make_conv_geom(h, w, c, channels[i], kernels[i]);
        spec.encoder.push_back(g);
        h = g.out_h;
        w = g.out_w;
        c = g.out_c;
    }
    return spec;
}

/// Kernel layout is [ky][kx][in_c][out_c]; decoder blocks store the kernel of
/// the encoder convolution they transpose (so in_c is the wide side).
struct NetworkParams {
    struct Block {
        std::vector<double> kernel;
        std::vector<double> bias;
    };
    std::vector<Block> encoder;
    std::vector<Block> decoder;  // decoder[j] transposes encoder[L-1-j]
};

/// He-normal kernels with fan_in = k*k*input_channels (the layer's own input),
/// zero biases. Deterministic per seed; encoder blocks are drawn first.
inline NetworkParams build_network(const NetworkSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    NetworkParams params;
    for (const ConvGeom& g : spec.encoder) {
        NetworkParams::Block b;
        const std::size_t fan_in = g.k * g.k * g.in_c;
        Matrix kern = he_normal_init(g.kernel_size(), 1, fan_in, rng);
        b.kernel = std::move(kern.data());
        b.bias.assign(g.out_c, 0.0);
        params.encoder.push_back(std::move(b));
    }
    for (std::size_t j = spec.encoder.size(); j-- > 0;) {
        const ConvGeom& g = spec.encoder[j];
        NetworkParams::Block b;
        const std::size_t fan_in = g.k * g.k * g.out_c;  // decoder input is the narrow side
        Matrix kern = he_normal_init(g.kernel_size(), 1, fan_in, rng);
        b.kernel = std::move(kern.data());
        b.bias.assign(g.in_c, 0.0);
        params.decoder.push_back(std::move(b));
    }
    return params;
}

namespace detail {

/// Y(b,oy,ox,oc) = sum_{ky,kx,ic} Xpad(b, oy*s+ky-pad, ox*s+kx-pad, ic) K(ky,kx,ic,oc)
inline Tensor conv_forward(const Tensor& in, const std::vector<double>& kern,
                           const ConvGeom& g) {
    Tensor out(in.n, g.out_h, g.out_w, g.out_c);
    for (std::size_t b = 0; b < in.n; ++b) {
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                          static_cast<std::ptrdiff_t>(g.pad_top);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                    for (std::size_t kx = 0; kx < g.k; ++kx) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                        const double* src = &in.v[((b * in.h + static_cast<std::size_t>(iy)) *
                                                       in.w +
                                                   static_cast<std::size_t>(ix)) *
                                                  in.c];
                        double* dst = &out.v[((b * g.out_h + oy) * g.out_w + ox) * g.out_c];
                        for (std::size_t ic = 0; ic < g.in_c; ++ic) {
                            const double a = src[ic];
                            if (a == 0.0) continue;
                            const double* kk = &kern[((ky * g.k + kx) * g.in_c + ic) * g.out_c];
                            for (std::size_t oc = 0; oc < g.out_c; ++oc) dst[oc] += a * kk[oc];
                        }
                    }
                }
            }
        }
    }
    return out;
}

/// Adjoint of conv_forward in its input: scatters dOut back through the kernel.
inline Tensor conv_grad_input(const Tensor& d_out, const std::vector<double>& kern,
                              const ConvGeom& g) {
    Tensor d_in(d_out.n, g.in_h, g.in_w, g.in_c);
    for (std::size_t b = 0; b < d_out.n; ++b) {
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                          static_cast<std::ptrdiff_t>(g.pad_top);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                    for (std::size_t kx = 0; kx < g.k; ++kx) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                        double* dst = &d_in.v[((b * g.in_h + static_cast<std::size_t>(iy)) *
                                                   g.in_w +
                                               static_cast<std::size_t>(ix)) *
                                              g.in_c];
                        const double* src =
                            &d_out.v[((b * g.out_h + oy) * g.out_w + ox) * g.out_c];
                        for (std::size_t ic = 0; ic < g.in_c; ++ic) {
                            const double* kk = &kern[((ky * g.k + kx) * g.in_c + ic) * g.out_c];
                            double s = 0.0;
                            for (std::size_t oc = 0; oc < g.out_c; ++oc) s += src[oc] * kk[oc];
                            dst[ic] += s;
                        }
                    }
                }
            }
        }
    }
    return d_in;
}

/// dK(ky,kx,ic,oc) = sum_{b,oy,ox} in(b, oy*s+ky-pad, ox*s+kx-pad, ic) dOut(b,oy,ox,oc)
inline std::vector<double> conv_grad_kernel(const Tensor& in, const Tensor& d_out,
                                            const ConvGeom& g) {
    std::vector<double> d_kern(g.kernel_size(), 0.0);
    for (std::size_t b = 0; b < in.n; ++b) {
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                          static_cast<std::ptrdiff_t>(g.pad_top);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                    for (std::size_t kx = 0; kx < g.k; ++kx) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                        const double* src = &in.v[((b * g.in_h + static_cast<std::size_t>(iy)) *
                                                       g.in_w +
                                                   static_cast<std::size_t>(ix)) *
                                                  g.in_c];
                        const double* dsrc =
                            &d_out.v[((b * g.out_h + oy) * g.out_w + ox) * g.out_c];
                        for (std::size_t ic = 0; ic < g.in_c; ++ic) {
                            const double a = src[ic];
                            if (a == 0.0) continue;
                            double* kk = &d_kern[((ky * g.k + kx) * g.in_c + ic) * g.out_c];
                            for (std::size_t oc = 0; oc < g.out_c; ++oc)
                                kk[oc] += a * dsrc[oc];
                        }
                    }
                }
            }
        }
    }
    return d_kern;
}

inline void add_bias_channelwise(Tensor& t, const std::vector<double>& bias) {
    const std::size_t spatial = t.n * t.h * t.w;
    for (std::size_t s = 0; s < spatial; ++s)
        for (std::size_t ch = 0; ch < t.c; ++ch) t.v[s * t.c + ch] += bias[ch];
}

inline std::vector<double> bias_grad(const Tensor& d_pre) {
    std::vector<double> g(d_pre.c, 0.0);
    const std::size_t spatial = d_pre.n * d_pre.h * d_pre.w;
    for (std::size_t s = 0; s < spatial; ++s)
        for (std::size_t ch = 0; ch < d_pre.c; ++ch) g[ch] += d_pre.v[s * d_pre.c + ch];
    return g;
}

inline void relu_inplace(Tensor& t) {
    for (double& x : t.v) x = x > 0.0 ? x : 0.0;
}

inline void relu_backward_inplace(Tensor& grad, const Tensor& pre) {
    for (std::size_t i = 0; i < grad.v.size(); ++i) {
        if (pre.v[i] <= 0.0) grad.v[i] = 0.0;
    }
}

}  // namespace detail

/// Activations of a full forward pass, kept for backpropagation.
struct ForwardPass {
    std::vector<Tensor> enc_pre, enc_act;  // enc_act.back() is the latent tensor
    std::vector<Tensor> dec_pre, dec_act;  // dec_act.back() is the reconstruction
};

inline void require_input_shape(const NetworkSpec& spec, const Tensor& x) {
    if (x.h != spec.input_h || x.w != spec.input_w || x.c != 1) {
        throw DimensionError("network input shape " + x.shape_str() + " does not match spec " +
                             std::to_string(spec.input_h) + "x" + std::to_string(spec.input_w) +
                             "x1");
    }
}

/// Runs the encoder; returns the latent tensor. When `cache` is given, pre- and
/// post-activation tensors are stored for backpropagation.
inline Tensor encode(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                     ForwardPass* cache = nullptr) {
    require_input_shape(spec, x);
    Tensor cur = x;
    for (std::size_t i = 0; i < spec.encoder.size(); ++i) {
        const ConvGeom& g = spec.encoder[i];
        Tensor pre = detail::conv_forward(cur, params.encoder[i].kernel, g);
        detail::add_bias_channelwise(pre, params.encoder[i].bias);
        Tensor act = pre;
        detail::relu_inplace(act);
        if (cache) {
            cache->enc_pre.push_back(std::move(pre));
            cache->enc_act.push_back(act);
        }
        cur = std::move(act);
    }
    return cur;
}

/// Runs the decoder (transposed convolutions) from a latent tensor; the output
/// has the encoder's input shape. All layers are ReLU except the last, which is
/// linear.
inline Tensor decode(const NetworkSpec& spec, const NetworkParams& params, const Tensor& latent,
                     ForwardPass* cache = nullptr) {
    const ConvGeom& last = spec.encoder.back();
    if (latent.h != last.out_h || latent.w != last.out_w || latent.c != last.out_c) {
        throw DimensionError("latent shape " + latent.shape_str() +
                             " does not match the encoder output");
    }
    Tensor cur = latent;
    const std::size_t layers = spec.encoder.size();
    for (std::size_t j = 0; j < layers; ++j) {
        const ConvGeom& g = spec.encoder[layers - 1 - j];
        Tensor pre = detail::conv_grad_input(cur, params.decoder[j].kernel, g);
        detail::add_bias_channelwise(pre, params.decoder[j].bias);
        Tensor act = pre;
        const bool relu = j + 1 < layers;  // final decoder layer is linear
        if (relu) detail::relu_inplace(act);
        if (cache) {
            cache->dec_pre.push_back(std::move(pre));
            cache->dec_act.push_back(act);
        }
        cur = std::move(act);
    }
    return cur;
}

/// Latent tensor -> feature matrix Z with one column per sample. The flattening
/// order is channel-major, then row, then column: row index (ch*h + y)*w + x.
inline Matrix flatten_latent(const Tensor& t) {
    Matrix z(t.h * t.w * t.c, t.n);
    for (std::size_t i = 0; i < t.n; ++i)
        for (std::size_t ch = 0; ch < t.c; ++ch)
            for (std::size_t y = 0; y < t.h; ++y)
                for (std::size_t x = 0; x < t.w; ++x)
                    z((ch * t.h + y) * t.w + x, i) = t.at(i, y, x, ch);
    return z;
}

inline Tensor unflatten_latent(const Matrix& z, std::size_t h, std::size_t w, std::size_t c) {
    if (z.rows() != h * w * c) {
        throw DimensionError("unflatten_latent: " + std::to_string(z.rows()) +
                             " rows cannot fill " + std::to_string(h) + "x" + std::to_string(w) +
                             "x" + std::to_string(c));
    }
    Tensor t(z.cols(), h, w, c);
    for (std::size_t i = 0; i < t.n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    t.at(i, y, x, ch) = z((ch * h + y) * w + x, i);
    return t;
}

/// Pixel matrix (side^2 x n, row-major pixels) <-> single-channel image tensor.
inline Tensor tensor_from_pixel_matrix(const Matrix& m, std::size_t h, std::size_t w) {
    if (m.rows() != h * w) {
        throw DimensionError("tensor_from_pixel_matrix: expected " + std::to_string(h * w) +
                             " pixel rows, got " + std::to_string(m.rows()));
    }
    Tensor t(m.cols(), h, w, 1);
    for (std::size_t i = 0; i < t.n; ++i)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) t.at(i, y, x, 0) = m(y * w + x, i);
    return t;
}

struct LossParts {
    double total = 0.0;
    double reconstruction = 0.0;   // 0.5 ||X - X_r||_F^2
    double self_expressive = 0.0;  // lambda2 ||Z - ZC||_F^2
    double regularizer = 0.0;      // lambda1 sum c ln c
};

struct NetworkGrads {
    std::vector<NetworkParams::Block> encoder, decoder;
    Matrix d_affinity;
};

/// Training-time configuration. `coupled` selects the baseline architecture in
/// which the decoder reconstructs from ZC instead of Z, so the reconstruction
/// gradient reaches both C and the encoder only through the self-expressive
/// layer.
struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t pretrain_steps = 200;
    std::size_t finetune_steps = 400;
    double lambda1 = 1.0;
    double lambda2 = 10.0;
    bool coupled = false;
    bool pretrain = true;
    std::uint64_t seed = 0;
    double epsilon = 1e-12;  // feasibility floor for the entropy term
};

struct TrainHistory {
    std::vector<LossParts> steps;
};

/// Loss and full backpropagated gradients for one whole-batch evaluation.
/// Decoupled mode: X_r = dec(enc(X)); the reconstruction term contributes no
/// gradient to C while the self-expressive term backpropagates into the
/// encoder. Coupled mode: X_r = dec(unflatten(Z C)).
inline std::pair<LossParts, NetworkGrads> loss_and_grads(const NetworkSpec& spec,
                                                         const NetworkParams& params,
                                                         const Tensor& x, const Matrix& c,
                                                         const TrainConfig& cfg) {
    const std::size_t n = x.n;
    if (c.rows() != n || c.cols() != n) {
        throw DimensionError("loss_and_grads: C must be n x n with n = batch size");
    }
    const double l1 = cfg.lambda1, l2 = cfg.lambda2;
    const bool need_entropy = l1 != 0.0;
    const bool need_se = l2 != 0.0;

    ForwardPass fwd;
    Tensor latent = encode(spec, params, x, &fwd);
    Matrix z = flatten_latent(latent);

    Matrix zc(1, 1);
    if (cfg.coupled || need_se) zc = z * c;

    Tensor recon = cfg.coupled
                       ? decode(spec, params,
                                unflatten_latent(zc, latent.h, latent.w, latent.c), &fwd)
                       : decode(spec, params, latent, &fwd);

    LossParts parts;
    Tensor d_recon(recon.n, recon.h, recon.w, recon.c);
    for (std::size_t i = 0; i < recon.v.size(); ++i) {
        const double diff = recon.v[i] - x.v[i];
        parts.reconstruction += 0.5 * diff * diff;
        d_recon.v[i] = diff;
    }

    Matrix residual(1, 1);
    if (need_se) {
        residual = z;
        residual -= zc;
        parts.self_expressive = l2 * frobenius_norm_sq(residual);
    }
    if (need_entropy) {
        for (double v : c.data()) {
            if (v < cfg.epsilon) {
                throw DomainError("loss_and_grads: affinity entry below the feasibility floor");
            }
        }
        parts.regularizer = l1 * neg_entropy(c);
    }
    parts.total = parts.reconstruction + parts.self_expressive + parts.regularizer;

    NetworkGrads grads;
    grads.encoder.resize(spec.encoder.size());
    grads.decoder.resize(spec.encoder.size());
    grads.d_affinity = Matrix(n, n, 0.0);

    // decoder backward
    const std::size_t layers = spec.encoder.size();
    Tensor cur = std::move(d_recon);
    for (std::size_t j = layers; j-- > 0;) {
        const ConvGeom& g = spec.encoder[layers - 1 - j];
        if (j + 1 < layers) detail::relu_backward_inplace(cur, fwd.dec_pre[j]);
        Tensor coupled_in;
        const Tensor* layer_input;  // the small-side tensor this layer consumed
        if (j > 0) {
            layer_input = &fwd.dec_act[j - 1];
        } else if (cfg.coupled) {
            coupled_in = unflatten_latent(zc, latent.h, latent.w, latent.c);
            layer_input = &coupled_in;
        } else {
            layer_input = &fwd.enc_act.back();
        }
        grads.decoder[j].bias = detail::bias_grad(cur);
        grads.decoder[j].kernel = detail::conv_grad_kernel(cur, *layer_input, g);
        cur = detail::conv_forward(cur, params.decoder[j].kernel, g);
    }
    // `cur` is now the gradient w.r.t. the decoder input (latent or ZC tensor)

    Matrix d_z(z.rows(), z.cols(), 0.0);
    if (cfg.coupled) {
        const Matrix d_zc = flatten_latent(cur);
        grads.d_affinity = transpose(z) * d_zc;
        d_z = d_zc * transpose(c);
        cur = Tensor(latent.n, latent.h, latent.w, latent.c);  // recon path ends at ZC
    }
    if (need_se) {
        // d/dZ lambda2 ||Z - ZC||^2 = 2 lambda2 (R - R C^T); d/dC = -2 lambda2 Z^T R
        Matrix d_z_se = residual - residual * transpose(c);
        d_z_se *= 2.0 * l2;
        d_z += d_z_se;
        Matrix d_c_se = transpose(z) * residual;
        d_c_se *= -2.0 * l2;
        grads.d_affinity += d_c_se;
    }
    if (need_entropy) {
        for (std::size_t i = 0; i < c.size(); ++i) {
            grads.d_affinity.data()[i] += l1 * (std::log(c.data()[i]) + 1.0);
        }
    }

    // fold the feature-space gradient into the latent stream and run the encoder backward
    {
        const Tensor d_latent = unflatten_latent(d_z, latent.h, latent.w, latent.c);
        for (std::size_t i = 0; i < cur.v.size(); ++i) cur.v[i] += d_latent.v[i];
    }
    for (std::size_t i = layers; i-- > 0;) {
        const ConvGeom& g = spec.encoder[i];
        detail::relu_backward_inplace(cur, fwd.enc_pre[i]);
        const Tensor& input = i == 0 ? x : fwd.enc_act[i - 1];
        grads.encoder[i].bias = detail::bias_grad(cur);
        grads.encoder[i].kernel = detail::conv_grad_kernel(input, cur, g);
        if (i > 0) cur = detail::conv_grad_input(cur, params.encoder[i].kernel, g);
    }

    if (!std::isfinite(parts.total)) {
        throw DivergenceError("loss_and_grads: non-finite loss");
    }
    return {parts, std::move(grads)};
}

namespace detail {

struct AdamBank {
    std::vector<AdamState> encoder, decoder;
    AdamState affinity;

    AdamBank(const NetworkParams& params, std::size_t n_affinity) : affinity(n_affinity) {
        for (const auto& b : params.encoder)
            encoder.emplace_back(b.kernel.size() + b.bias.size());
        for (const auto& b : params.decoder)
            decoder.emplace_back(b.kernel.size() + b.bias.size());
    }
};

/// One ADAM update over a parameter block, kernel first then bias, sharing one
/// moment buffer per block.
inline void update_block(NetworkParams::Block& block, const NetworkParams::Block& grad,
                         AdamState& state, double lr) {
    std::vector<double> packed(block.kernel.size() + block.bias.size());
    std::vector<double> packed_grad(packed.size());
    std::copy(block.kernel.begin(), block.kernel.end(), packed.begin());
    std::copy(block.bias.begin(), block.bias.end(), packed.begin() + block.kernel.size());
    std::copy(grad.kernel.begin(), grad.kernel.end(), packed_grad.begin());
    std::copy(grad.bias.begin(), grad.bias.end(), packed_grad.begin() + grad.kernel.size());
    adam_step(std::span<double>(packed), std::span<const double>(packed_grad), state, lr);
    std::copy(packed.begin(), packed.begin() + block.kernel.size(), block.kernel.begin());
    std::copy(packed.begin() + block.kernel.size(), packed.end(), block.bias.begin());
}

}  // namespace detail

/// Reconstruction-only training ("pre-training"): minimizes 0.5||X - X_r||_F^2
/// by ADAM, leaving the affinity untouched.
inline TrainHistory pretrain(const NetworkSpec& spec, NetworkParams& params, const Tensor& x,
                             std::size_t steps, double learning_rate) {
    TrainHistory history;
    if (steps == 0) return history;
    TrainConfig plain;
    plain.lambda1 = 0.0;
    plain.lambda2 = 0.0;
    plain.coupled = false;
    plain.learning_rate = learning_rate;
    Matrix dummy_c(x.n, x.n, 0.0);
    detail::AdamBank bank(params, x.n * x.n);
    for (std::size_t step = 0; step < steps; ++step) {
        auto [parts, grads] = loss_and_grads(spec, params, x, dummy_c, plain);
        if (!std::isfinite(parts.total)) {
            throw DivergenceError("pretrain: non-finite loss at step " + std::to_string(step + 1));
        }
        for (std::size_t i = 0; i < params.encoder.size(); ++i)
            detail::update_block(params.encoder[i], grads.encoder[i], bank.encoder[i],
                                 learning_rate);
        for (std::size_t i = 0; i < params.decoder.size(); ++i)
            detail::update_block(params.decoder[i], grads.decoder[i], bank.decoder[i],
                                 learning_rate);
        history.steps.push_back(parts);
    }
    return history;
}

/// Joint fine-tuning of network parameters and the affinity matrix, whole data
/// set as one batch, ADAM on both, with the entropy feasibility clamp applied
/// to C after every step. Returns the history; params and C are updated in
/// place.
inline TrainHistory train_joint(const NetworkSpec& spec, NetworkParams& params, Matrix& c,
                                const Tensor& x, const TrainConfig& cfg) {
    if (c.rows() != x.n || c.cols() != x.n) {
        throw DimensionError("train_joint: C must be n x n with n = batch size");
    }
    TrainHistory history;
    detail::AdamBank bank(params, c.size());
    for (std::size_t step = 0; step < cfg.finetune_steps; ++step) {
        auto [parts, grads] = loss_and_grads(spec, params, x, c, cfg);
        if (!std::isfinite(parts.total)) {
            throw DivergenceError("train_joint: non-finite loss at step " +
                                  std::to_string(step + 1));
        }
        for (std::size_t i = 0; i < params.encoder.size(); ++i)
            detail::update_block(params.encoder[i], grads.encoder[i], bank.encoder[i],
                                 cfg.learning_rate);
        for (std::size_t i = 0; i < params.decoder.size(); ++i)
            detail::update_block(params.decoder[i], grads.decoder[i], bank.decoder[i],
                                 cfg.learning_rate);
        adam_step(c, grads.d_affinity, bank.affinity, cfg.learning_rate);
        if (cfg.lambda1 != 0.0) {
            for (double& v : c.data()) v = std::max(v, cfg.epsilon);
        }
        history.steps.push_back(parts);
    }
    return history;
}

// ---------------------------------------------------------------------------
// Parameter checkpoints: magic "MESCNET1", then two 32-bit little-endian
// unsigned counts (encoder layers, decoder layers), then per layer -- in spec
// order, encoder first -- a five-count shape header (kh, kw, dim3, dim4,
// bias_len) followed by the kernel and bias payloads as 64-bit little-endian
// floats.
// ---------------------------------------------------------------------------

inline constexpr char kNetworkMagic[] = "MESCNET1";

inline void save_params(const std::string& path, const NetworkSpec& spec,
                        const NetworkParams& params) {
    std::string buf;
    buf.append(kNetworkMagic, 8);
    detail::put_u32_le(buf, static_cast<std::uint32_t>(params.encoder.size()));
    detail::put_u32_le(buf, static_cast<std::uint32_t>(params.decoder.size()));
    const auto dump_block = [&](const NetworkParams::Block& b, const ConvGeom& g, bool enc) {
        detail::put_u32_le(buf, static_cast<std::uint32_t>(g.k));
        detail::put_u32_le(buf, static_cast<std::uint32_t>(g.k));
        detail::put_u32_le(buf, static_cast<std::uint32_t>(g.in_c));
        detail::put_u32_le(buf, static_cast<std::uint32_t>(g.out_c));
        detail::put_u32_le(buf, static_cast<std::uint32_t>(enc ? g.out_c : g.in_c));
        for (double d : b.kernel) detail::put_f64_le(buf, d);
        for (double d : b.bias) detail::put_f64_le(buf, d);
    };
    for (std::size_t i = 0; i < params.encoder.size(); ++i)
        dump_block(params.encoder[i], spec.encoder[i], true);
    for (std::size_t j = 0; j < params.decoder.size(); ++j)
        dump_block(params.decoder[j], spec.encoder[spec.encoder.size() - 1 - j], false);
    detail::write_file_bytes(path, buf);
}

inline NetworkParams load_params(const std::string& path, const NetworkSpec& spec) {
    const std::string bytes = detail::read_file_bytes(path);
    if (bytes.size() < 16) throw ParseError("'" + path + "': truncated header");
    if (std::memcmp(bytes.data(), kNetworkMagic, 8) != 0) {
        throw ParseError("'" + path + "': bad magic, expected MESCNET1");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    std::size_t off = 8;
    const std::uint32_t enc_count = detail::get_u32_le(p + off);
    const std::uint32_t dec_count = detail::get_u32_le(p + off + 4);
    off += 8;
    if (enc_count != spec.encoder.size() || dec_count != spec.encoder.size()) {
        throw ParseError("'" + path + "': layer counts do not match the network spec");
    }
    NetworkParams params;
    const auto read_block = [&](const ConvGeom& g, bool enc) {
        if (off + 20 > bytes.size()) throw ParseError("'" + path + "': truncated layer header");
        const std::uint32_t kh = detail::get_u32_le(p + off);
        const std::uint32_t kw = detail::get_u32_le(p + off + 4);
        const std::uint32_t d3 = detail::get_u32_le(p + off + 8);
        const std::uint32_t d4 = detail::get_u32_le(p + off + 12);
        const std::uint32_t blen = detail::get_u32_le(p + off + 16);
        off += 20;
        const std::uint32_t expected_bias = static_cast<std::uint32_t>(enc ? g.out_c : g.in_c);
        if (kh != g.k || kw != g.k || d3 != g.in_c || d4 != g.out_c || blen != expected_bias) {
            throw ParseError("'" + path + "': layer shape header does not match the spec");
        }
        NetworkParams::Block b;
        const std::size_t doubles = g.kernel_size() + blen;
        if (off + 8 * doubles > bytes.size()) {
            throw ParseError("'" + path + "': payload length mismatch, expected at least " +
                             std::to_string(off + 8 * doubles) + " bytes, got " +
                             std::to_string(bytes.size()));
        }
        b.kernel.resize(g.kernel_size());
        for (double& d : b.kernel) {
            d = detail::get_f64_le(p + off);
            off += 8;
        }
        b.bias.resize(blen);
        for (double& d : b.bias) {
            d = detail::get_f64_le(p + off);
            off += 8;
        }
        return b;
    };
    for (std::size_t i = 0; i < enc_count; ++i)
        params.encoder.push_back(read_block(spec.encoder[i], true));
    for (std::size_t j = 0; j < dec_count; ++j)
        params.decoder.push_back(read_block(spec.encoder[spec.encoder.size() - 1 - j], false));
    if (off != bytes.size()) {
        throw ParseError("'" + path + "': payload length mismatch, expected " +
                         std::to_string(off) + " bytes, got " + std::to_string(bytes.size()));
    }
    return params;
}

}  // namespace mesc
