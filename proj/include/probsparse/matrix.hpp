// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "probsparse/alloc_meter.hpp"
#include "probsparse/error.hpp"
#include "probsparse/rng.hpp"

namespace probsparse {

// Dense row-major matrix of doubles. All library arithmetic is 64-bit.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // rows * cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

inline Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m.at(i, i) = 1.0;
    }
    return m;
}

// Buffer API: transient working storage charged to the active AllocMeter.
// Score slabs, softmax weight matrices and sampled-key copies go through
// here; model weights and returned values use plain Matrix construction.
inline Matrix make_transient(std::size_t rows, std::size_t cols) {
    detail::charge_transient(rows * cols * sizeof(double));
    return Matrix(rows, cols);
}

// C[i][j] = sum_k A[i][k] * B[k][j]. ikj loop order keeps the inner loop on
// contiguous rows of B and C. Result is charged as a transient buffer.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: inner dimensions differ, " + detail::shape_str(a.rows, a.cols) +
                         " x " + detail::shape_str(b.rows, b.cols));
    }
    Matrix c = make_transient(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* crow = c.data.data() + i * c.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = arow[k];
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    return c;
}

// max(v) + ln(sum_j exp(v[j] - max(v))). Exact for constant input.
inline double log_sum_exp(std::span<const double> v) {
    if (v.empty()) {
        throw ContractError("log_sum_exp: empty input");
    }
    double vmax = v[0];
    for (double x : v) {
        if (x > vmax) {
            vmax = x;
        }
    }
    double acc = 0.0;
    for (double x : v) {
        acc += std::exp(x - vmax);
    }
    return vmax + std::log(acc);
}

namespace detail {

// Dot product with eight independent accumulators. Plain `acc += a*b` chains
// every add through one register and caps throughput at the FMA latency;
// splitting the sum keeps the pipeline full and lets the compiler vectorize
// without reassociation flags.
inline double dot_product(const double* a, const double* b, std::size_t n) {
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    double acc4 = 0.0, acc5 = 0.0, acc6 = 0.0, acc7 = 0.0;
    std::size_t t = 0;
    for (; t + 8 <= n; t += 8) {
        acc0 += a[t] * b[t];
        acc1 += a[t + 1] * b[t + 1];
        acc2 += a[t + 2] * b[t + 2];
        acc3 += a[t + 3] * b[t + 3];
        acc4 += a[t + 4] * b[t + 4];
        acc5 += a[t + 5] * b[t + 5];
        acc6 += a[t + 6] * b[t + 6];
        acc7 += a[t + 7] * b[t + 7];
    }
    double acc = ((acc0 + acc1) + (acc2 + acc3)) + ((acc4 + acc5) + (acc6 + acc7));
    for (; t < n; ++t) {
        acc += a[t] * b[t];
    }
    return acc;
}

// Row-wise softmax with per-row max subtraction. Assumes finite input.
inline void row_softmax_in_place(Matrix& m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* row = m.data.data() + i * m.cols;
        double rmax = row[0];
        for (std::size_t j = 1; j < m.cols; ++j) {
            if (row[j] > rmax) {
                rmax = row[j];
            }
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) {
            row[j] = std::exp(row[j] - rmax);
            sum += row[j];
        }
        double inv = 1.0 / sum;
        for (std::size_t j = 0; j < m.cols; ++j) {
            row[j] *= inv;
        }
    }
}

} // namespace detail

// Row-wise softmax; each output row is non-negative and sums to 1.
inline Matrix row_softmax(const Matrix& m) {
    for (double x : m.data) {
        if (!std::isfinite(x)) {
            throw NumericError("row_softmax: non-finite input");
        }
    }
    Matrix out = make_transient(m.rows, m.cols);
    out.data = m.data;
    detail::row_softmax_in_place(out);
    return out;
}

// Matrix of standard-normal entries; deterministic given the generator state.
// Not charged: this is how model weights and inputs are made.
inline Matrix randn_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows < 1 || cols < 1) {
        throw ContractError("randn_matrix: rows and cols must be >= 1");
    }
    Matrix m(rows, cols);
    for (double& x : m.data) {
        x = rng.next_normal();
    }
    return m;
}

} // namespace probsparse
