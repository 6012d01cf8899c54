// SPDX-License-Identifier: Apache-2.0
#pragma once

// Brute-force reference implementations for tests and the verify suite.
// These deliberately share no reduction helpers with the library: each one
// carries its own max-shift and normalization loops, so a bug in the library
// numerics cannot validate itself.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "probsparse/error.hpp"
#include "probsparse/matrix.hpp"

namespace probsparse::oracle {

// Triple-loop softmax attention: explicit scores, explicit exponentials,
// explicit per-query normalization, explicit weighted sum.
inline Matrix oracle_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
    if (q.cols != k.cols || k.rows != v.rows) {
        throw ShapeError("oracle_attention: shapes q " + detail::shape_str(q.rows, q.cols) +
                         ", k " + detail::shape_str(k.rows, k.cols) + ", v " +
                         detail::shape_str(v.rows, v.cols));
    }
    Matrix out(q.rows, v.cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
    for (std::size_t i = 0; i < q.rows; ++i) {
        std::vector<double> scores(k.rows);
        double smax = -1e300;
        for (std::size_t j = 0; j < k.rows; ++j) {
            double dot = 0.0;
            for (std::size_t t = 0; t < q.cols; ++t) {
                dot += q.at(i, t) * k.at(j, t);
            }
            scores[j] = dot * scale;
            if (scores[j] > smax) {
                smax = scores[j];
            }
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < k.rows; ++j) {
            scores[j] = std::exp(scores[j] - smax);
            denom += scores[j];
        }
        for (std::size_t j = 0; j < k.rows; ++j) {
            double p = scores[j] / denom;
            for (std::size_t c = 0; c < v.cols; ++c) {
                out.at(i, c) += p * v.at(j, c);
            }
        }
    }
    return out;
}

// Uniform-vs-score-distribution divergence through the explicit probability
// vector: materializes p via per-key exponentials and normalization, then
// evaluates sum_j (1/L) ln((1/L) / p_j). This is the quantity the library's
// kl_from_uniform computes in log-sum-exp form (note the direction: the
// expectation is taken under the uniform distribution), reached here by a
// fully independent code path.
inline double oracle_kl(std::span<const double> q_i, const Matrix& k) {
    if (q_i.size() != k.cols || k.rows < 1) {
        throw ShapeError("oracle_kl: query length " + std::to_string(q_i.size()) + " vs k " +
                         detail::shape_str(k.rows, k.cols));
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(k.cols));
    std::vector<double> scores(k.rows);
    double smax = -1e300;
    for (std::size_t j = 0; j < k.rows; ++j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < k.cols; ++t) {
            dot += q_i[t] * k.at(j, t);
        }
        scores[j] = dot * scale;
        if (scores[j] > smax) {
            smax = scores[j];
        }
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < k.rows; ++j) {
        scores[j] = std::exp(scores[j] - smax);
        denom += scores[j];
    }
    const auto len = static_cast<double>(k.rows);
    const double uniform = 1.0 / len;
    double kl = 0.0;
    for (std::size_t j = 0; j < k.rows; ++j) {
        double p = scores[j] / denom;
        kl += uniform * std::log(uniform / p);
    }
    return kl;
}

// Exhaustive top-k: full stable sort descending, lower index first on ties,
// result reported ascending.
inline std::vector<std::size_t> oracle_topk(std::span<const double> scores, std::size_t k) {
    if (k < 1 || k > scores.size()) {
        throw ContractError("oracle_topk: need 1 <= k <= len, got k=" + std::to_string(k) +
                            " len=" + std::to_string(scores.size()));
    }
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

} // namespace probsparse::oracle
