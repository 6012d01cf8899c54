// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "probsparse/attention.hpp"
#include "probsparse/matrix.hpp"

namespace probsparse {

// Hyper-parameters of prob-sparse attention.
//   r_sample: sampled keys per ln(L) unit,  L_tilde = ceil(r_sample * ln L)
//   r_sparse: fraction of queries kept,     L_sparse = ceil(r_sparse * L)
//   share_every: recompute the selection every N-th layer, reuse in between
struct SparsityParams {
    double r_sample = 1.0;
    double r_sparse = 0.5;
    std::size_t share_every = 4;

    void validate() const {
        if (!(r_sample > 0.0)) {
            throw ContractError("SparsityParams: r_sample must be > 0");
        }
        if (!(r_sparse > 0.0 && r_sparse <= 1.0)) {
            throw ContractError("SparsityParams: r_sparse must lie in (0, 1]");
        }
        if (share_every < 1) {
            throw ContractError("SparsityParams: share_every must be >= 1");
        }
    }
};

// Result of one query-selection pass: the per-query measurement values and
// the sorted index set of queries that receive full attention. Both counts
// are clamped to [1, L] so at least one query and one sampled key survive
// any parameter choice.
struct SparsitySelection {
    std::vector<double> scores;       // sampled sparsity measurement per query, length L
    std::vector<std::size_t> indices; // selected query indices, ascending, distinct
    std::size_t l_sparse = 0;         // == indices.size()
    std::size_t l_tilde = 0;          // sampled key count used for the scores
};

inline std::size_t clamped_l_sparse(double r_sparse, std::size_t seq_len) {
    auto raw = static_cast<std::size_t>(std::ceil(r_sparse * static_cast<double>(seq_len)));
    return std::clamp<std::size_t>(raw, 1, seq_len);
}

inline std::size_t clamped_l_tilde(double r_sample, std::size_t seq_len) {
    auto raw = static_cast<std::size_t>(
        std::ceil(r_sample * std::log(static_cast<double>(seq_len))));
    return std::clamp<std::size_t>(raw, 1, seq_len);
}

namespace detail {

// Scaled scores of one query against every key row: s_j = q_i . k_j / sqrt(d).
inline std::vector<double> scaled_query_scores(std::span<const double> q_i, const Matrix& k) {
    if (q_i.size() != k.cols) {
        throw ShapeError("query length " + std::to_string(q_i.size()) + " vs k " +
                         shape_str(k.rows, k.cols));
    }
    if (k.rows < 1) {
        throw ContractError("need at least one key row");
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(k.cols));
    std::vector<double> s(k.rows);
    for (std::size_t j = 0; j < k.rows; ++j) {
        const double* krow = k.data.data() + j * k.cols;
        double dot = 0.0;
        for (std::size_t t = 0; t < k.cols; ++t) {
            dot += q_i[t] * krow[t];
        }
        s[j] = dot * inv_sqrt_d;
        if (!std::isfinite(s[j])) {
            throw NumericError("non-finite attention score");
        }
    }
    return s;
}

} // namespace detail

// KL divergence of a query's attention-score distribution from uniform:
// ln sum_j e^{s_j} - mean_j(s_j) - ln L. Zero for uniform scores.
inline double kl_from_uniform(std::span<const double> q_i, const Matrix& k) {
    std::vector<double> s = detail::scaled_query_scores(q_i, k);
    const auto len = static_cast<double>(s.size());
    double mean = 0.0;
    for (double x : s) {
        mean += x;
    }
    mean /= len;
    return log_sum_exp(s) - mean - std::log(len);
}

// Sparsity measurement: ln sum_j e^{s_j} - mean_j(s_j). Equals
// kl_from_uniform + ln L; its floor is ln L, reached at uniform scores.
inline double sparsity_measure_exact(std::span<const double> q_i, const Matrix& k) {
    std::vector<double> s = detail::scaled_query_scores(q_i, k);
    const auto len = static_cast<double>(s.size());
    double mean = 0.0;
    for (double x : s) {
        mean += x;
    }
    mean /= len;
    return log_sum_exp(s) - mean;
}

// Sampled surrogate: max over the sampled scaled scores minus their mean.
// Replaces the log-sum-exp with the plain max; with a full sample
// it under-shoots the exact measurement by at most ln L.
inline double sparsity_measure_sampled(std::span<const double> q_i, const Matrix& k,
                                       std::span<const std::size_t> sample_idx) {
    if (sample_idx.empty()) {
        throw ContractError("sparsity_measure_sampled: empty sample");
    }
    if (q_i.size() != k.cols) {
        throw ShapeError("sparsity_measure_sampled: query length " +
                         std::to_string(q_i.size()) + " vs k " +
                         detail::shape_str(k.rows, k.cols));
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(k.cols));
    double smax = -std::numeric_limits<double>::infinity();
    double ssum = 0.0;
    for (std::size_t j : sample_idx) {
        if (j >= k.rows) {
            throw ContractError("sparsity_measure_sampled: sample index out of range");
        }
        const double* krow = k.data.data() + j * k.cols;
        double dot = 0.0;
        for (std::size_t t = 0; t < k.cols; ++t) {
            dot += q_i[t] * krow[t];
        }
        double s = dot * inv_sqrt_d;
        smax = std::max(smax, s);
        ssum += s;
    }
    return smax - ssum / static_cast<double>(sample_idx.size());
}

// Scores every query against one shared random key sample and keeps the
// top-L_sparse queries. Ties break toward the lower query index; the
// returned index set is sorted ascending. Transients charged: the sampled
// key copy (L_tilde x d) and the L x L_tilde sampling score slab.
inline SparsitySelection select_queries(const Matrix& q, const Matrix& k,
                                        const SparsityParams& params, Rng& rng) {
    params.validate();
    if (q.cols != k.cols) {
        throw ShapeError("select_queries: q " + detail::shape_str(q.rows, q.cols) + " vs k " +
                         detail::shape_str(k.rows, k.cols));
    }
    if (q.rows != k.rows || q.rows < 1) {
        throw ShapeError("select_queries: self-attention requires q.rows == k.rows >= 1");
    }
    const std::size_t seq_len = q.rows;

    SparsitySelection sel;
    sel.l_sparse = clamped_l_sparse(params.r_sparse, seq_len);
    sel.l_tilde = clamped_l_tilde(params.r_sample, seq_len);

    // One key sample shared by all queries.
    std::vector<std::size_t> sample = sample_without_replacement(seq_len, sel.l_tilde, rng);
    Matrix sampled_keys = make_transient(sel.l_tilde, k.cols);
    for (std::size_t r = 0; r < sample.size(); ++r) {
        const double* src = k.data.data() + sample[r] * k.cols;
        std::copy(src, src + k.cols, sampled_keys.data.data() + r * k.cols);
    }

    // L x L_tilde sampled scores, then max - mean per query row.
    Matrix samp_scores = make_transient(seq_len, sel.l_tilde);
    std::vector<std::size_t> rows = detail::all_row_indices(seq_len);
    detail::fill_scaled_scores(q, rows, sampled_keys, samp_scores);

    sel.scores.resize(seq_len);
    for (std::size_t i = 0; i < seq_len; ++i) {
        const double* srow = samp_scores.data.data() + i * sel.l_tilde;
        double smax = srow[0];
        double ssum = srow[0];
        for (std::size_t j = 1; j < sel.l_tilde; ++j) {
            smax = std::max(smax, srow[j]);
            ssum += srow[j];
        }
        sel.scores[i] = smax - ssum / static_cast<double>(sel.l_tilde);
    }

    // Top-L_sparse by score, lower index first on ties, reported ascending.
    std::vector<std::size_t> order = rows;
    std::stable_sort(order.begin(), order.end(), [&sel](std::size_t a, std::size_t b) {
        return sel.scores[a] > sel.scores[b];
    });
    sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sel.l_sparse));
    std::sort(sel.indices.begin(), sel.indices.end());
    return sel;
}

// Prob-sparse self-attention: selected queries get the full softmax
// attention row, every other query passes its own value row through
// unchanged. Only an L_sparse x L score slab is materialized.
inline AttnOutput attention_prob_sparse(const Matrix& q, const Matrix& k, const Matrix& v,
                                        const SparsitySelection& sel, bool keep_weights = false) {
    if (q.cols != k.cols) {
        throw ShapeError("attention_prob_sparse: q " + detail::shape_str(q.rows, q.cols) +
                         " vs k " + detail::shape_str(k.rows, k.cols));
    }
    if (q.rows != k.rows || k.rows != v.rows) {
        throw ShapeError("attention_prob_sparse: identity passthrough needs square "
                         "self-attention, got q.rows=" + std::to_string(q.rows) +
                         " k.rows=" + std::to_string(k.rows) + " v.rows=" +
                         std::to_string(v.rows));
    }
    const std::size_t seq_len = q.rows;
    if (sel.indices.size() != sel.l_sparse || sel.l_sparse < 1 || sel.l_sparse > seq_len) {
        throw ContractError("attention_prob_sparse: selection size inconsistent with L");
    }
    for (std::size_t r = 0; r < sel.indices.size(); ++r) {
        if (sel.indices[r] >= seq_len || (r > 0 && sel.indices[r] <= sel.indices[r - 1])) {
            throw ContractError("attention_prob_sparse: indices must be ascending in [0, L)");
        }
    }

    // Unselected rows: bit-exact copy of the aligned value rows.
    AttnOutput result;
    result.values = v;

    Matrix slab = make_transient(sel.l_sparse, seq_len);
    detail::attention_rows_into(q, sel.indices, k, v, slab, result.values);
    if (keep_weights) {
        result.weights = std::move(slab);
    }
    return result;
}

// Cross-layer measurement sharing: a fresh selection is computed on layers
// 0, N, 2N, ... and reused for the N-1 layers in between.
struct LayerShareState {
    std::optional<SparsitySelection> cached;
    std::size_t layer_counter = 0;          // layers seen so far
    std::size_t measurements_computed = 0;  // fresh select_queries calls
};

inline SparsitySelection shared_select(const Matrix& q, const Matrix& k,
                                       const SparsityParams& params, LayerShareState& state,
                                       Rng& rng) {
    params.validate();
    if (state.layer_counter % params.share_every == 0) {
        state.cached = select_queries(q, k, params, rng);
        ++state.measurements_computed;
    } else if (!state.cached) {
        throw ContractError("shared_select: no cached selection on a non-computing layer");
    }
    ++state.layer_counter;
    return *state.cached;
}

// Standalone prob-sparse kernel for multi_head_attention: every call selects
// afresh, so each head draws its own key sample from the shared generator.
inline AttentionFn prob_sparse_attention_fn(SparsityParams params, Rng& rng) {
    return [params, &rng](std::size_t, const Matrix& q, const Matrix& k, const Matrix& v) {
        SparsitySelection sel = select_queries(q, k, params, rng);
        return attention_prob_sparse(q, k, v, sel).values;
    };
}

} // namespace probsparse
