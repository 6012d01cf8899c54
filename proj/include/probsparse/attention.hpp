// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "probsparse/matrix.hpp"

namespace probsparse {

// Per-head projection weights. w_q/w_k/w_v are d_x x d; the optional output
// projection w_o (d x d) defaults to identity when absent.
struct ProjectionWeights {
    Matrix w_q;
    Matrix w_k;
    Matrix w_v;
    std::optional<Matrix> w_o;
};

struct AttnOutput {
    Matrix values;                  // L x d_v
    std::optional<Matrix> weights;  // attended-rows x L_k, kept on request
};

struct QkvTriple {
    Matrix q;
    Matrix k;
    Matrix v;
};

namespace detail {

// slab[r][j] = q.row(query_rows[r]) . k.row(j) / sqrt(d). No k transpose is
// materialized; both operands are walked along contiguous rows. Query rows
// are processed four at a time so each streamed key row feeds four dots.
inline void fill_scaled_scores(const Matrix& q, std::span<const std::size_t> query_rows,
                               const Matrix& k, Matrix& slab) {
    const std::size_t d = q.cols;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const std::size_t n = query_rows.size();
    std::size_t r = 0;
    for (; r + 4 <= n; r += 4) {
        const double* q0 = q.data.data() + query_rows[r] * d;
        const double* q1 = q.data.data() + query_rows[r + 1] * d;
        const double* q2 = q.data.data() + query_rows[r + 2] * d;
        const double* q3 = q.data.data() + query_rows[r + 3] * d;
        double* s0 = slab.data.data() + r * slab.cols;
        double* s1 = s0 + slab.cols;
        double* s2 = s1 + slab.cols;
        double* s3 = s2 + slab.cols;
        for (std::size_t j = 0; j < k.rows; ++j) {
            const double* krow = k.data.data() + j * d;
            s0[j] = dot_product(q0, krow, d) * inv_sqrt_d;
            s1[j] = dot_product(q1, krow, d) * inv_sqrt_d;
            s2[j] = dot_product(q2, krow, d) * inv_sqrt_d;
            s3[j] = dot_product(q3, krow, d) * inv_sqrt_d;
        }
    }
    for (; r < n; ++r) {
        const double* qrow = q.data.data() + query_rows[r] * d;
        double* srow = slab.data.data() + r * slab.cols;
        for (std::size_t j = 0; j < k.rows; ++j) {
            srow[j] = dot_product(qrow, k.data.data() + j * d, d) * inv_sqrt_d;
        }
    }
}

// Softmax attention for the given query rows, written into the matching rows
// of `out`. `slab` must be query_rows.size() x k.rows and is left holding the
// post-softmax weights. This is the one scoring path shared by the dense and
// the prob-sparse kernels.
inline void attention_rows_into(const Matrix& q, std::span<const std::size_t> query_rows,
                                const Matrix& k, const Matrix& v, Matrix& slab, Matrix& out) {
    fill_scaled_scores(q, query_rows, k, slab);
    row_softmax_in_place(slab);
    const std::size_t d_v = v.cols;
    const std::size_t n = query_rows.size();
    // same four-row blocking as the score fill: one pass over v per block
    std::size_t r = 0;
    for (; r + 4 <= n; r += 4) {
        double* o0 = out.data.data() + query_rows[r] * d_v;
        double* o1 = out.data.data() + query_rows[r + 1] * d_v;
        double* o2 = out.data.data() + query_rows[r + 2] * d_v;
        double* o3 = out.data.data() + query_rows[r + 3] * d_v;
        for (std::size_t c = 0; c < d_v; ++c) {
            o0[c] = o1[c] = o2[c] = o3[c] = 0.0;
        }
        const double* w0 = slab.data.data() + r * slab.cols;
        const double* w1 = w0 + slab.cols;
        const double* w2 = w1 + slab.cols;
        const double* w3 = w2 + slab.cols;
        for (std::size_t j = 0; j < v.rows; ++j) {
            const double* vrow = v.data.data() + j * d_v;
            const double a = w0[j], b = w1[j], cc = w2[j], dd = w3[j];
            for (std::size_t c = 0; c < d_v; ++c) {
                const double vc = vrow[c];
                o0[c] += a * vc;
                o1[c] += b * vc;
                o2[c] += cc * vc;
                o3[c] += dd * vc;
            }
        }
    }
    for (; r < n; ++r) {
        const double* wrow = slab.data.data() + r * slab.cols;
        double* orow = out.data.data() + query_rows[r] * out.cols;
        for (std::size_t c = 0; c < d_v; ++c) {
            orow[c] = 0.0;
        }
        for (std::size_t j = 0; j < v.rows; ++j) {
            const double wj = wrow[j];
            const double* vrow = v.data.data() + j * d_v;
            for (std::size_t c = 0; c < d_v; ++c) {
                orow[c] += wj * vrow[c];
            }
        }
    }
}

inline std::vector<std::size_t> all_row_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

} // namespace detail

// Q = x w_q, K = x w_k, V = x w_v.
inline QkvTriple project_qkv(const Matrix& x, const ProjectionWeights& w) {
    if (x.cols != w.w_q.rows || x.cols != w.w_k.rows || x.cols != w.w_v.rows) {
        throw ShapeError("project_qkv: input " + detail::shape_str(x.rows, x.cols) +
                         " does not match projection rows " +
                         detail::shape_str(w.w_q.rows, w.w_q.cols));
    }
    return {matmul(x, w.w_q), matmul(x, w.w_k), matmul(x, w.w_v)};
}

// softmax(q k^T / sqrt(d)) v with the row softmax taken over keys. The only
// transient charged is the L_q x L_k score slab (reused in place for the
// softmax weights).
inline AttnOutput attention_dense(const Matrix& q, const Matrix& k, const Matrix& v,
                                  bool keep_weights = false) {
    if (q.cols != k.cols) {
        throw ShapeError("attention_dense: q " + detail::shape_str(q.rows, q.cols) +
                         " vs k " + detail::shape_str(k.rows, k.cols));
    }
    if (k.rows != v.rows) {
        throw ShapeError("attention_dense: k " + detail::shape_str(k.rows, k.cols) +
                         " vs v " + detail::shape_str(v.rows, v.cols));
    }
    Matrix slab = make_transient(q.rows, k.rows);
    Matrix out(q.rows, v.cols);
    std::vector<std::size_t> rows = detail::all_row_indices(q.rows);
    detail::attention_rows_into(q, rows, k, v, slab, out);

    AttnOutput result;
    result.values = std::move(out);
    if (keep_weights) {
        result.weights = std::move(slab);
    }
    return result;
}

// Vector form: sum_j p(k_j | q_i) v_j for a single query row.
inline std::vector<double> attention_row(std::span<const double> q_i, const Matrix& k,
                                         const Matrix& v) {
    if (q_i.size() != k.cols) {
        throw ShapeError("attention_row: query length " + std::to_string(q_i.size()) +
                         " vs k " + detail::shape_str(k.rows, k.cols));
    }
    if (k.rows != v.rows) {
        throw ShapeError("attention_row: k " + detail::shape_str(k.rows, k.cols) + " vs v " +
                         detail::shape_str(v.rows, v.cols));
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(k.cols));
    std::vector<double> scores(k.rows);
    for (std::size_t j = 0; j < k.rows; ++j) {
        const double* krow = k.data.data() + j * k.cols;
        double dot = 0.0;
        for (std::size_t t = 0; t < k.cols; ++t) {
            dot += q_i[t] * krow[t];
        }
        scores[j] = dot * inv_sqrt_d;
    }
    double smax = *std::max_element(scores.begin(), scores.end());
    double denom = 0.0;
    for (double& s : scores) {
        s = std::exp(s - smax);
        denom += s;
    }
    std::vector<double> out(v.cols, 0.0);
    for (std::size_t j = 0; j < v.rows; ++j) {
        const double w = scores[j] / denom;
        const double* vrow = v.data.data() + j * v.cols;
        for (std::size_t c = 0; c < v.cols; ++c) {
            out[c] += w * vrow[c];
        }
    }
    return out;
}

// Pluggable attention kernel: called once per head with the projected Q/K/V.
// The head index lets stateful kernels (layer-shared sparse selection) keep
// one stream per head.
using AttentionFn =
    std::function<Matrix(std::size_t head, const Matrix& q, const Matrix& k, const Matrix& v)>;

inline AttentionFn dense_attention_fn() {
    return [](std::size_t, const Matrix& q, const Matrix& k, const Matrix& v) {
        return attention_dense(q, k, v).values;
    };
}

// Multi-head wrapper: per-head projection, pluggable attention, per-head
// output projection (identity when w_o is absent), feature-axis concat.
inline Matrix multi_head_attention(const Matrix& x, const std::vector<ProjectionWeights>& heads,
                                   const AttentionFn& attn_fn) {
    if (heads.empty()) {
        throw ContractError("multi_head_attention: need at least one head");
    }
    const std::size_t d_model = x.cols;
    const std::size_t d_head = heads[0].w_q.cols;
    if (d_head * heads.size() != d_model) {
        throw ShapeError("multi_head_attention: heads * d_head = " +
                         std::to_string(heads.size() * d_head) + " does not cover d_model = " +
                         std::to_string(d_model));
    }
    Matrix out(x.rows, d_model);
    for (std::size_t h = 0; h < heads.size(); ++h) {
        const ProjectionWeights& w = heads[h];
        if (w.w_q.cols != d_head || w.w_k.cols != d_head || w.w_v.cols != d_head) {
            throw ShapeError("multi_head_attention: head " + std::to_string(h) +
                             " projection width differs from head 0");
        }
        QkvTriple qkv = project_qkv(x, w);
        Matrix head_out = attn_fn(h, qkv.q, qkv.k, qkv.v);
        if (head_out.rows != x.rows || head_out.cols != d_head) {
            throw ShapeError("multi_head_attention: attn_fn returned " +
                             detail::shape_str(head_out.rows, head_out.cols) + ", expected " +
                             detail::shape_str(x.rows, d_head));
        }
        if (w.w_o) {
            if (w.w_o->rows != d_head || w.w_o->cols != d_head) {
                throw ShapeError("multi_head_attention: w_o must be " +
                                 detail::shape_str(d_head, d_head) + ", got " +
                                 detail::shape_str(w.w_o->rows, w.w_o->cols));
            }
            head_out = matmul(head_out, *w.w_o);
        }
        for (std::size_t i = 0; i < x.rows; ++i) {
            const double* src = head_out.data.data() + i * d_head;
            double* dst = out.data.data() + i * d_model + h * d_head;
            for (std::size_t c = 0; c < d_head; ++c) {
                dst[c] = src[c];
            }
        }
    }
    return out;
}

// Random projection weights for n_heads heads of width d_model / n_heads,
// scaled by 1/sqrt(d_model). No output projection.
inline std::vector<ProjectionWeights> make_mhsa_weights(std::size_t d_model, std::size_t n_heads,
                                                        Rng& rng) {
    if (n_heads < 1 || d_model % n_heads != 0) {
        throw ContractError("make_mhsa_weights: d_model = " + std::to_string(d_model) +
                            " not divisible by heads = " + std::to_string(n_heads));
    }
    const std::size_t d_head = d_model / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_model));
    std::vector<ProjectionWeights> heads(n_heads);
    for (ProjectionWeights& w : heads) {
        w.w_q = randn_matrix(d_model, d_head, rng);
        w.w_k = randn_matrix(d_model, d_head, rng);
        w.w_v = randn_matrix(d_model, d_head, rng);
        for (Matrix* m : {&w.w_q, &w.w_k, &w.w_v}) {
            for (double& x : m->data) {
                x *= scale;
            }
        }
    }
    return heads;
}

} // namespace probsparse
