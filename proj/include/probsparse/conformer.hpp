// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "probsparse/attention.hpp"
#include "probsparse/matrix.hpp"
#include "probsparse/sparsity.hpp"

namespace probsparse {

// Per-feature normalization. LayerNorm normalizes each row over features
// before the affine map; Affine applies scale/shift only, which is the
// inference-time (folded) form of batch norm and doubles as a pass-through
// when scale = 1, shift = 0.
enum class NormKind { LayerNorm, Affine };

struct NormParams {
    NormKind kind = NormKind::LayerNorm;
    std::vector<double> scale; // per feature
    std::vector<double> shift; // per feature

    static NormParams layer_norm(std::size_t dim) {
        return {NormKind::LayerNorm, std::vector<double>(dim, 1.0),
                std::vector<double>(dim, 0.0)};
    }
    static NormParams affine(std::size_t dim) {
        return {NormKind::Affine, std::vector<double>(dim, 1.0), std::vector<double>(dim, 0.0)};
    }
};

inline constexpr double kLayerNormEps = 1e-5;

inline Matrix apply_norm(const Matrix& x, const NormParams& norm) {
    if (norm.scale.size() != x.cols || norm.shift.size() != x.cols) {
        throw ShapeError("apply_norm: params sized " + std::to_string(norm.scale.size()) +
                         " vs input " + detail::shape_str(x.rows, x.cols));
    }
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* row = x.data.data() + i * x.cols;
        double* orow = out.data.data() + i * x.cols;
        if (norm.kind == NormKind::LayerNorm) {
            double mean = 0.0;
            for (std::size_t j = 0; j < x.cols; ++j) {
                mean += row[j];
            }
            mean /= static_cast<double>(x.cols);
            double var = 0.0;
            for (std::size_t j = 0; j < x.cols; ++j) {
                double dx = row[j] - mean;
                var += dx * dx;
            }
            var /= static_cast<double>(x.cols);
            double inv = 1.0 / std::sqrt(var + kLayerNormEps);
            for (std::size_t j = 0; j < x.cols; ++j) {
                orow[j] = (row[j] - mean) * inv * norm.scale[j] + norm.shift[j];
            }
        } else {
            for (std::size_t j = 0; j < x.cols; ++j) {
                orow[j] = row[j] * norm.scale[j] + norm.shift[j];
            }
        }
    }
    return out;
}

inline double swish(double x) { return x / (1.0 + std::exp(-x)); }

// Two-layer feed-forward: pre-norm, linear, swish, linear.
struct FfnWeights {
    NormParams pre_norm;
    Matrix w1;                // d_model x d_ff
    std::vector<double> b1;   // d_ff
    Matrix w2;                // d_ff x d_model
    std::vector<double> b2;   // d_model
};

inline Matrix ffn_forward(const Matrix& x, const FfnWeights& w) {
    if (x.cols != w.w1.rows) {
        throw ShapeError("ffn_forward: input " + detail::shape_str(x.rows, x.cols) + " vs w1 " +
                         detail::shape_str(w.w1.rows, w.w1.cols));
    }
    Matrix h = matmul(apply_norm(x, w.pre_norm), w.w1);
    for (std::size_t i = 0; i < h.rows; ++i) {
        double* row = h.data.data() + i * h.cols;
        for (std::size_t j = 0; j < h.cols; ++j) {
            row[j] = swish(row[j] + w.b1[j]);
        }
    }
    Matrix out = matmul(h, w.w2);
    for (std::size_t i = 0; i < out.rows; ++i) {
        double* row = out.data.data() + i * out.cols;
        for (std::size_t j = 0; j < out.cols; ++j) {
            row[j] += w.b2[j];
        }
    }
    return out;
}

// Convolution module: pre-norm, pointwise expansion to 2*d with a gated
// linear unit, depthwise convolution (odd kernel, zero same-padding along
// the sequence axis), norm, swish, pointwise projection back to d.
struct ConvWeights {
    NormParams pre_norm;
    Matrix pw_in;                  // d x 2d
    std::vector<double> pw_in_b;   // 2d
    Matrix depthwise;              // kernel_size x d, one column of taps per channel
    std::vector<double> dw_b;      // d
    NormParams mid_norm;           // folded batch-norm slot
    Matrix pw_out;                 // d x d
    std::vector<double> pw_out_b;  // d
};

inline Matrix conv_module_forward(const Matrix& x, const ConvWeights& w) {
    const std::size_t d = x.cols;
    if (w.pw_in.rows != d || w.pw_in.cols != 2 * d) {
        throw ShapeError("conv_module_forward: pw_in must be " + detail::shape_str(d, 2 * d) +
                         ", got " + detail::shape_str(w.pw_in.rows, w.pw_in.cols));
    }
    if (w.depthwise.cols != d || w.depthwise.rows % 2 == 0) {
        throw ShapeError("conv_module_forward: depthwise kernel must be odd x " +
                         std::to_string(d) + ", got " +
                         detail::shape_str(w.depthwise.rows, w.depthwise.cols));
    }
    const std::size_t ks = w.depthwise.rows;
    const auto half = static_cast<std::ptrdiff_t>(ks / 2);

    // Pointwise expansion + GLU: first half carries the signal, second half gates.
    Matrix expanded = matmul(apply_norm(x, w.pre_norm), w.pw_in);
    Matrix gated(x.rows, d);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* erow = expanded.data.data() + i * 2 * d;
        double* grow = gated.data.data() + i * d;
        for (std::size_t c = 0; c < d; ++c) {
            double a = erow[c] + w.pw_in_b[c];
            double g = erow[d + c] + w.pw_in_b[d + c];
            grow[c] = a / (1.0 + std::exp(-g));
        }
    }

    // Depthwise same-padded convolution along the sequence axis.
    Matrix conv(x.rows, d);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double* crow = conv.data.data() + i * d;
        for (std::size_t t = 0; t < ks; ++t) {
            std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) +
                                 static_cast<std::ptrdiff_t>(t) - half;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(x.rows)) {
                continue; // zero padding
            }
            const double* grow = gated.data.data() + static_cast<std::size_t>(src) * d;
            const double* taps = w.depthwise.data.data() + t * d;
            for (std::size_t c = 0; c < d; ++c) {
                crow[c] += taps[c] * grow[c];
            }
        }
        for (std::size_t c = 0; c < d; ++c) {
            crow[c] += w.dw_b[c];
        }
    }

    Matrix normed = apply_norm(conv, w.mid_norm);
    for (double& v : normed.data) {
        v = swish(v);
    }
    Matrix out = matmul(normed, w.pw_out);
    for (std::size_t i = 0; i < out.rows; ++i) {
        double* row = out.data.data() + i * d;
        for (std::size_t c = 0; c < d; ++c) {
            row[c] += w.pw_out_b[c];
        }
    }
    return out;
}

struct ConformerBlockWeights {
    FfnWeights ffn1;
    NormParams mhsa_norm;
    std::vector<ProjectionWeights> mhsa;
    ConvWeights conv;
    FfnWeights ffn2;
    NormParams final_norm;
};

// One Conformer block:
//   x <- x + 1/2 FFN1(x)
//   x <- x + MHSA(x)
//   x <- x + Conv(x)
//   out = LayerNorm(x + 1/2 FFN2(x))
inline Matrix conformer_block_forward(const Matrix& x, const ConformerBlockWeights& w,
                                      const AttentionFn& attn_fn) {
    Matrix h = x;

    Matrix f1 = ffn_forward(h, w.ffn1);
    for (std::size_t t = 0; t < h.data.size(); ++t) {
        h.data[t] += 0.5 * f1.data[t];
    }

    Matrix attn = multi_head_attention(apply_norm(h, w.mhsa_norm), w.mhsa, attn_fn);
    for (std::size_t t = 0; t < h.data.size(); ++t) {
        h.data[t] += attn.data[t];
    }

    Matrix conv = conv_module_forward(h, w.conv);
    for (std::size_t t = 0; t < h.data.size(); ++t) {
        h.data[t] += conv.data[t];
    }

    Matrix f2 = ffn_forward(h, w.ffn2);
    for (std::size_t t = 0; t < h.data.size(); ++t) {
        h.data[t] += 0.5 * f2.data[t];
    }
    return apply_norm(h, w.final_norm);
}

enum class AttnMode { Dense, ProbSparse };

struct EncoderConfig {
    std::size_t num_layers = 16;
    std::size_t d_model = 256;
    std::size_t heads = 4;
    std::size_t d_ff = 1024;
    std::size_t kernel_size = 3;
    SparsityParams sparsity;
    AttnMode attn_mode = AttnMode::Dense;

    void validate() const {
        if (heads < 1 || d_model % heads != 0) {
            throw ContractError("EncoderConfig: d_model = " + std::to_string(d_model) +
                                " not divisible by heads = " + std::to_string(heads));
        }
        if (kernel_size % 2 == 0) {
            throw ContractError("EncoderConfig: kernel_size must be odd");
        }
        sparsity.validate();
    }
};

namespace detail {

inline Matrix scaled_randn(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
    Matrix m = randn_matrix(rows, cols, rng);
    for (double& x : m.data) {
        x *= scale;
    }
    return m;
}

} // namespace detail

// Random block weights: matrices scaled by 1/sqrt(fan-in), zero biases,
// unit layer norms, pass-through (fresh batch-norm) conv mid norm.
inline ConformerBlockWeights make_block_weights(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t d = cfg.d_model;
    ConformerBlockWeights w;

    auto make_ffn = [&]() {
        FfnWeights f;
        f.pre_norm = NormParams::layer_norm(d);
        f.w1 = detail::scaled_randn(d, cfg.d_ff, 1.0 / std::sqrt(static_cast<double>(d)), rng);
        f.b1.assign(cfg.d_ff, 0.0);
        f.w2 = detail::scaled_randn(cfg.d_ff, d, 1.0 / std::sqrt(static_cast<double>(cfg.d_ff)),
                                    rng);
        f.b2.assign(d, 0.0);
        return f;
    };
    w.ffn1 = make_ffn();
    w.ffn2 = make_ffn();

    w.mhsa_norm = NormParams::layer_norm(d);
    w.mhsa = make_mhsa_weights(d, cfg.heads, rng);

    w.conv.pre_norm = NormParams::layer_norm(d);
    w.conv.pw_in = detail::scaled_randn(d, 2 * d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    w.conv.pw_in_b.assign(2 * d, 0.0);
    w.conv.depthwise = detail::scaled_randn(cfg.kernel_size, d,
                                            1.0 / std::sqrt(static_cast<double>(cfg.kernel_size)),
                                            rng);
    w.conv.dw_b.assign(d, 0.0);
    w.conv.mid_norm = NormParams::affine(d);
    w.conv.pw_out = detail::scaled_randn(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    w.conv.pw_out_b.assign(d, 0.0);

    w.final_norm = NormParams::layer_norm(d);
    return w;
}

inline std::vector<ConformerBlockWeights> make_encoder_weights(const EncoderConfig& cfg,
                                                               Rng& rng) {
    std::vector<ConformerBlockWeights> layers;
    layers.reserve(cfg.num_layers);
    for (std::size_t i = 0; i < cfg.num_layers; ++i) {
        layers.push_back(make_block_weights(cfg, rng));
    }
    return layers;
}

struct EncoderForwardResult {
    Matrix output;
    // Fresh sparsity measurements per head stream during this pass; equal
    // across heads, 0 in dense mode. With num_layers divisible by N_share
    // this is num_layers / N_share.
    std::size_t measurements_computed = 0;
};

// Runs the block stack. In prob-sparse mode each head keeps its own
// LayerShareState: the selection is recomputed on layers 0, N, 2N, ... and
// reused in between. Share state is per forward pass, not carried across
// calls.
inline EncoderForwardResult encoder_forward(const Matrix& x, const EncoderConfig& cfg,
                                            const std::vector<ConformerBlockWeights>& weights,
                                            Rng& rng) {
    cfg.validate();
    if (x.cols != cfg.d_model) {
        throw ShapeError("encoder_forward: input " + detail::shape_str(x.rows, x.cols) +
                         " vs d_model = " + std::to_string(cfg.d_model));
    }
    if (weights.size() != cfg.num_layers) {
        throw ContractError("encoder_forward: expected " + std::to_string(cfg.num_layers) +
                            " layer weights, got " + std::to_string(weights.size()));
    }

    std::vector<LayerShareState> share(cfg.heads);
    AttentionFn attn_fn;
    if (cfg.attn_mode == AttnMode::Dense) {
        attn_fn = dense_attention_fn();
    } else {
        attn_fn = [&](std::size_t head, const Matrix& q, const Matrix& k, const Matrix& v) {
            SparsitySelection sel = shared_select(q, k, cfg.sparsity, share[head], rng);
            return attention_prob_sparse(q, k, v, sel).values;
        };
    }

    EncoderForwardResult result;
    result.output = x;
    for (std::size_t layer = 0; layer < cfg.num_layers; ++layer) {
        result.output = conformer_block_forward(result.output, weights[layer], attn_fn);
    }
    if (cfg.attn_mode == AttnMode::ProbSparse && !share.empty()) {
        result.measurements_computed = share[0].measurements_computed;
    }
    return result;
}

} // namespace probsparse
