// SPDX-License-Identifier: Apache-2.0
#pragma once

// Property/oracle suite behind the `verify` CLI subcommand: every library
// operation is cross-checked against an independent brute-force path or an
// analytic identity on seeded random instances. Failures report the
// instance seed for replay.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "probsparse/bench.hpp"
#include "probsparse/conformer.hpp"
#include "probsparse/oracle.hpp"

namespace probsparse::verify {

struct PropertyResult {
    std::string name;
    bool pass = false;
    std::size_t instances = 0;
    std::string detail; // failing seed + message, empty on pass
};

namespace detail {

using probsparse::bench::detail::splitmix64;

inline std::size_t rand_size(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.next_below(hi - lo + 1));
}

inline std::string fmt_fail(std::uint64_t inst_seed, const std::string& msg) {
    std::ostringstream os;
    os << "instance seed " << inst_seed << ": " << msg;
    return os.str();
}

// Runs `body` once per instance with a derived per-instance seed; the first
// failure message stops the property.
inline PropertyResult run_property(
    const std::string& name, std::uint64_t seed, std::size_t instances,
    const std::function<std::optional<std::string>(Rng&)>& body) {
    PropertyResult res;
    res.name = name;
    res.instances = instances;
    for (std::size_t i = 0; i < instances; ++i) {
        std::uint64_t inst_seed = splitmix64(seed ^ splitmix64(i + 1));
        Rng rng(inst_seed);
        std::optional<std::string> err;
        try {
            err = body(rng);
        } catch (const std::exception& e) {
            err = std::string("exception: ") + e.what();
        }
        if (err) {
            res.pass = false;
            res.detail = fmt_fail(inst_seed, *err);
            return res;
        }
    }
    res.pass = true;
    return res;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
    return worst;
}

} // namespace detail

inline std::vector<PropertyResult> run_suite(std::uint64_t seed, std::size_t instances) {
    namespace d = detail;
    using oracle::oracle_attention;
    using oracle::oracle_kl;
    using oracle::oracle_topk;

    std::vector<PropertyResult> results;
    auto add = [&](const std::string& name, std::size_t n,
                   const std::function<std::optional<std::string>(Rng&)>& body) {
        results.push_back(d::run_property(name, seed ^ d::splitmix64(results.size() + 17), n,
                                          body));
    };
    // Cap for checks that run whole encoders or big buffers.
    const std::size_t few = std::max<std::size_t>(1, instances / 100);

    add("matmul/identity-and-hand-product", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t n = d::rand_size(rng, 1, 12);
        std::size_t m = d::rand_size(rng, 1, 12);
        Matrix a = randn_matrix(n, m, rng);
        Matrix ai = matmul(a, identity(m));
        if (d::max_abs_diff(a, ai) != 0.0) {
            return "matmul(a, I) != a";
        }
        Matrix x(2, 2), y(2, 2);
        x.data = {1, 2, 3, 4};
        y.data = {5, 6, 7, 8};
        Matrix z = matmul(x, y);
        std::vector<double> want = {19, 22, 43, 50};
        for (std::size_t i = 0; i < 4; ++i) {
            if (z.data[i] != want[i]) {
                return "2x2 hand product mismatch";
            }
        }
        return std::nullopt;
    });

    add("matmul/shape-contract", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t n = d::rand_size(rng, 1, 10);
        std::size_t m = d::rand_size(rng, 1, 10);
        std::size_t p = d::rand_size(rng, 1, 10);
        Matrix a = randn_matrix(n, m, rng);
        Matrix b = randn_matrix(m, p, rng);
        Matrix c = matmul(a, b);
        if (c.rows != n || c.cols != p) {
            return "result shape wrong";
        }
        Matrix bad = randn_matrix(m + 1, p, rng);
        try {
            matmul(a, bad);
            return "mismatched inner dims did not throw";
        } catch (const ShapeError&) {
        }
        return std::nullopt;
    });

    add("softmax/row-sums-extreme", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t n = d::rand_size(rng, 1, 8);
        std::size_t m = d::rand_size(rng, 1, 32);
        Matrix x = randn_matrix(n, m, rng);
        for (double& v : x.data) {
            v *= 1e4; // extreme magnitudes must not overflow
        }
        Matrix s = row_softmax(x);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                if (s.at(i, j) < 0.0) {
                    return "negative softmax weight";
                }
                sum += s.at(i, j);
            }
            if (std::abs(sum - 1.0) > 1e-12) {
                return "row sum off by more than 1e-12";
            }
        }
        return std::nullopt;
    });

    add("lse/brute-force-agreement", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t n = d::rand_size(rng, 1, 24);
        std::vector<double> v(n);
        for (double& x : v) {
            x = rng.next_normal() * 3.0;
        }
        double direct = 0.0;
        for (double x : v) {
            direct += std::exp(x);
        }
        direct = std::log(direct);
        if (std::abs(log_sum_exp(v) - direct) > 1e-10) {
            return "lse != ln(sum(exp))";
        }
        return std::nullopt;
    });

    add("lse/bounds-and-shift", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t n = d::rand_size(rng, 1, 32);
        std::vector<double> v(n);
        double vmax = -1e300;
        for (double& x : v) {
            x = rng.next_normal() * 50.0;
            vmax = std::max(vmax, x);
        }
        double lse = log_sum_exp(v);
        if (lse < vmax - 1e-12 || lse > vmax + std::log(static_cast<double>(n)) + 1e-12) {
            return "lse outside [max, max + ln n]";
        }
        double c = rng.next_normal() * 100.0;
        std::vector<double> shifted = v;
        for (double& x : shifted) {
            x += c;
        }
        if (std::abs(log_sum_exp(shifted) - (lse + c)) > 1e-10) {
            return "shift equivariance violated";
        }
        return std::nullopt;
    });

    add("rng/seeded-reproducibility", instances, [](Rng& rng) -> std::optional<std::string> {
        std::uint64_t s = rng.next_u64();
        Rng a(s), b(s);
        Matrix ma = randn_matrix(3, 5, a);
        Matrix mb = randn_matrix(3, 5, b);
        if (ma.data != mb.data) {
            return "randn streams differ for equal seeds";
        }
        auto ia = sample_without_replacement(100, 10, a);
        auto ib = sample_without_replacement(100, 10, b);
        if (ia != ib) {
            return "sample streams differ for equal seeds";
        }
        return std::nullopt;
    });

    add("rng/normal-moments", 1, [](Rng& rng) -> std::optional<std::string> {
        const std::size_t n = 100000;
        double sum = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double x = rng.next_normal();
            sum += x;
            sq += x * x;
        }
        double mean = sum / n;
        double var = sq / n - mean * mean;
        if (std::abs(mean) > 0.05) {
            return "sample mean outside +/-0.05";
        }
        if (std::abs(var - 1.0) > 0.1) {
            return "sample variance outside 1 +/- 0.1";
        }
        return std::nullopt;
    });

    add("rng/sample-without-replacement", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t n = d::rand_size(rng, 1, 64);
        std::size_t k = d::rand_size(rng, 1, n);
        auto idx = sample_without_replacement(n, k, rng);
        if (idx.size() != k) {
            return "wrong sample size";
        }
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] >= n || (i > 0 && idx[i] <= idx[i - 1])) {
                return "indices not distinct ascending in range";
            }
        }
        auto full = sample_without_replacement(n, n, rng);
        for (std::size_t i = 0; i < n; ++i) {
            if (full[i] != i) {
                return "full sample is not 0..n-1";
            }
        }
        return std::nullopt;
    });

    add("attention/row-convexity", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t L = d::rand_size(rng, 1, 24);
        std::size_t dd = d::rand_size(rng, 1, 8);
        Matrix q = randn_matrix(L, dd, rng);
        Matrix k = randn_matrix(L, dd, rng);
        Matrix v = randn_matrix(L, dd, rng);
        Matrix out = attention_dense(q, k, v).values;
        for (std::size_t c = 0; c < dd; ++c) {
            double lo = 1e300, hi = -1e300;
            for (std::size_t j = 0; j < L; ++j) {
                lo = std::min(lo, v.at(j, c));
                hi = std::max(hi, v.at(j, c));
            }
            for (std::size_t i = 0; i < L; ++i) {
                if (out.at(i, c) < lo - 1e-12 || out.at(i, c) > hi + 1e-12) {
                    return "output left the convex hull of value rows";
                }
            }
        }
        return std::nullopt;
    });

    add("attention/key-value-permutation", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t L = d::rand_size(rng, 2, 16);
        std::size_t dd = d::rand_size(rng, 1, 8);
        Matrix q = randn_matrix(L, dd, rng);
        Matrix k = randn_matrix(L, dd, rng);
        Matrix v = randn_matrix(L, dd, rng);
        // random permutation via sampled order
        std::vector<std::size_t> perm(L);
        for (std::size_t i = 0; i < L; ++i) {
            perm[i] = i;
        }
        for (std::size_t i = L - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
            std::swap(perm[i], perm[j]);
        }
        Matrix kp(L, dd), vp(L, dd);
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t c = 0; c < dd; ++c) {
                kp.at(i, c) = k.at(perm[i], c);
                vp.at(i, c) = v.at(perm[i], c);
            }
        }
        Matrix a = attention_dense(q, k, v).values;
        Matrix b = attention_dense(q, kp, vp).values;
        if (d::max_abs_diff(a, b) > 1e-12) {
            return "joint key/value permutation changed the output";
        }
        return std::nullopt;
    });

    add("attention/dense-vs-row-form", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t L = d::rand_size(rng, 1, 64);
        std::size_t dd = d::rand_size(rng, 1, 16);
        Matrix q = randn_matrix(L, dd, rng);
        Matrix k = randn_matrix(L, dd, rng);
        Matrix v = randn_matrix(L, dd, rng);
        Matrix dense = attention_dense(q, k, v).values;
        for (std::size_t i = 0; i < L; ++i) {
            std::vector<double> row = attention_row(q.row(i), k, v);
            for (std::size_t c = 0; c < dd; ++c) {
                if (std::abs(row[c] - dense.at(i, c)) > 1e-10) {
                    return "matrix and vector forms disagree";
                }
            }
        }
        return std::nullopt;
    });

    add("attention/score-scale-equivalence", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t L = d::rand_size(rng, 1, 16);
        std::size_t dd = d::rand_size(rng, 1, 8);
        double s = 0.25 + rng.next_unit() * 4.0;
        Matrix q = randn_matrix(L, dd, rng);
        Matrix k = randn_matrix(L, dd, rng);
        Matrix v = randn_matrix(L, dd, rng);
        Matrix qs = q, ks = k;
        double root = std::sqrt(s);
        for (double& x : qs.data) {
            x *= root;
        }
        for (double& x : ks.data) {
            x *= root;
        }
        Matrix lib = attention_dense(qs, ks, v).values;
        // reference path: raw scores scaled by s before an explicit softmax
        Matrix ref(L, dd);
        double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dd));
        for (std::size_t i = 0; i < L; ++i) {
            std::vector<double> sc(L);
            double m = -1e300;
            for (std::size_t j = 0; j < L; ++j) {
                double dot = 0.0;
                for (std::size_t t = 0; t < dd; ++t) {
                    dot += q.at(i, t) * k.at(j, t);
                }
                sc[j] = s * dot * inv_sqrt_d;
                m = std::max(m, sc[j]);
            }
            double den = 0.0;
            for (double& x : sc) {
                x = std::exp(x - m);
                den += x;
            }
            for (std::size_t j = 0; j < L; ++j) {
                for (std::size_t c = 0; c < dd; ++c) {
                    ref.at(i, c) += sc[j] / den * v.at(j, c);
                }
            }
        }
        if (d::max_abs_diff(lib, ref) > 1e-10) {
            return "sqrt(s) input scaling != score scaling by s";
        }
        return std::nullopt;
    });

    add("attention/dense-vs-oracle", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t L = d::rand_size(rng, 1, 64);
        std::size_t dd = d::rand_size(rng, 1, 16);
        Matrix q = randn_matrix(L, dd, rng);
        Matrix k = randn_matrix(L, dd, rng);
        Matrix v = randn_matrix(L, dd, rng);
        Matrix lib = attention_dense(q, k, v).values;
        Matrix ref = oracle_attention(q, k, v);
        if (d::max_abs_diff(lib, ref) > 1e-10) {
            return "library attention disagrees with triple-loop oracle";
        }
        return std::nullopt;
    });

    add("sparsity/kl-vs-oracle", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t L = d::rand_size(rng, 1, 64);
        std::size_t dd = d::rand_size(rng, 1, 16);
        Matrix q = randn_matrix(1, dd, rng);
        Matrix k = randn_matrix(L, dd, rng);
        double lib = kl_from_uniform(q.row(0), k);
        double ref = oracle_kl(q.row(0), k);
        if (std::abs(lib - ref) > 1e-9) {
            return "kl_from_uniform disagrees with definitional oracle";
        }
        return std::nullopt;
    });

    add("sparsity/exact-identity-and-floor", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t L = d::rand_size(rng, 1, 64);
        std::size_t dd = d::rand_size(rng, 1, 16);
        Matrix q = randn_matrix(1, dd, rng);
        Matrix k = randn_matrix(L, dd, rng);
        double exact = sparsity_measure_exact(q.row(0), k);
        double kl = kl_from_uniform(q.row(0), k);
        double lnL = std::log(static_cast<double>(L));
        if (std::abs(exact - (kl + lnL)) > 1e-10) {
            return "exact != kl + ln L";
        }
        if (exact < lnL - 1e-10) {
            return "exact below its ln L floor";
        }
        return std::nullopt;
    });

    add("sparsity/sampled-sandwich", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t L = d::rand_size(rng, 1, 64);
        std::size_t dd = d::rand_size(rng, 1, 16);
        Matrix q = randn_matrix(1, dd, rng);
        Matrix k = randn_matrix(L, dd, rng);
        std::vector<std::size_t> full(L);
        for (std::size_t j = 0; j < L; ++j) {
            full[j] = j;
        }
        double exact = sparsity_measure_exact(q.row(0), k);
        double sampled = sparsity_measure_sampled(q.row(0), k, full);
        double gap = exact - sampled;
        if (gap < -1e-12 || gap > std::log(static_cast<double>(L)) + 1e-12) {
            return "exact - sampled outside [0, ln L]";
        }
        return std::nullopt;
    });

    add("sparsity/select-vs-exhaustive-topk", instances,
        [](Rng& rng) -> std::optional<std::string> {
            std::size_t L = d::rand_size(rng, 1, 32);
            std::size_t dd = d::rand_size(rng, 1, 8);
            Matrix q = randn_matrix(L, dd, rng);
            // duplicate half the query rows so tied measurements exercise
            // the lower-index tie rule
            for (std::size_t i = 1; i < L; i += 2) {
                for (std::size_t c = 0; c < dd; ++c) {
                    q.at(i, c) = q.at(i - 1, c);
                }
            }
            Matrix k = randn_matrix(L, dd, rng);
            SparsityParams p;
            p.r_sparse = 0.5;
            p.r_sample = 1e9; // forces a full key sample
            Rng sel_rng(rng.next_u64());
            SparsitySelection sel = select_queries(q, k, p, sel_rng);
            if (sel.l_tilde != L) {
                return "full sampling did not clamp L_tilde to L";
            }
            auto want = oracle_topk(sel.scores, sel.l_sparse);
            if (sel.indices != want) {
                return "selected index set differs from exhaustive top-k";
            }
            return std::nullopt;
        });

    add("sparsity/select-determinism", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t L = d::rand_size(rng, 1, 48);
        std::size_t dd = d::rand_size(rng, 1, 8);
        Matrix q = randn_matrix(L, dd, rng);
        Matrix k = randn_matrix(L, dd, rng);
        SparsityParams p;
        std::uint64_t s = rng.next_u64();
        Rng r1(s), r2(s);
        SparsitySelection a = select_queries(q, k, p, r1);
        SparsitySelection b = select_queries(q, k, p, r2);
        if (a.indices != b.indices || a.scores != b.scores || a.l_tilde != b.l_tilde) {
            return "selection not bit-identical across equal seeds";
        }
        return std::nullopt;
    });

    add("sparsity/full-selection-equals-dense", instances,
        [](Rng& rng) -> std::optional<std::string> {
            std::size_t L = d::rand_size(rng, 1, 96);
            std::size_t dd = d::rand_size(rng, 1, 16);
            Matrix q = randn_matrix(L, dd, rng);
            Matrix k = randn_matrix(L, dd, rng);
            Matrix v = randn_matrix(L, dd, rng);
            SparsityParams p;
            p.r_sparse = 1.0;
            Rng sel_rng(rng.next_u64());
            SparsitySelection sel = select_queries(q, k, p, sel_rng);
            Matrix sparse = attention_prob_sparse(q, k, v, sel).values;
            Matrix dense = attention_dense(q, k, v).values;
            if (d::max_abs_diff(sparse, dense) > 1e-9) {
                return "full selection differs from dense attention";
            }
            return std::nullopt;
        });

    add("sparsity/passthrough-bit-exact", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t L = d::rand_size(rng, 2, 64);
        std::size_t dd = d::rand_size(rng, 1, 16);
        Matrix q = randn_matrix(L, dd, rng);
        Matrix k = randn_matrix(L, dd, rng);
        Matrix v = randn_matrix(L, dd, rng);
        SparsityParams p; // r_sparse = 0.5
        Rng sel_rng(rng.next_u64());
        SparsitySelection sel = select_queries(q, k, p, sel_rng);
        Matrix out = attention_prob_sparse(q, k, v, sel).values;
        Matrix dense = attention_dense(q, k, v).values;
        std::size_t si = 0;
        for (std::size_t i = 0; i < L; ++i) {
            bool selected = si < sel.indices.size() && sel.indices[si] == i;
            if (selected) {
                ++si;
                for (std::size_t c = 0; c < dd; ++c) {
                    if (std::abs(out.at(i, c) - dense.at(i, c)) > 1e-10) {
                        return "selected row differs from dense attention";
                    }
                }
            } else {
                for (std::size_t c = 0; c < dd; ++c) {
                    if (out.at(i, c) != v.at(i, c)) {
                        return "unselected row is not a bit-exact value copy";
                    }
                }
            }
        }
        return std::nullopt;
    });

    add("sparsity/slab-byte-bound", 1, [](Rng& rng) -> std::optional<std::string> {
        for (std::size_t L : {std::size_t{512}, std::size_t{2048}}) {
            std::size_t dd = 16;
            Matrix q = randn_matrix(L, dd, rng);
            Matrix k = randn_matrix(L, dd, rng);
            Matrix v = randn_matrix(L, dd, rng);
            SparsityParams p; // r_sparse = 0.5, r_sample = 1
            Rng sel_rng(rng.next_u64());
            SparsitySelection sel = select_queries(q, k, p, sel_rng);

            AllocMeter dense_meter;
            {
                MeterScope scope(dense_meter);
                attention_dense(q, k, v);
            }
            AllocMeter sparse_meter;
            {
                MeterScope scope(sparse_meter);
                attention_prob_sparse(q, k, v, sel);
            }
            double bound = p.r_sparse * static_cast<double>(dense_meter.transient_bytes()) +
                           static_cast<double>(L * sel.l_tilde * sizeof(double));
            if (static_cast<double>(sparse_meter.transient_bytes()) > bound) {
                return "sparse slab bytes exceed r_sparse * dense + sampling slab at L=" +
                       std::to_string(L);
            }
        }
        return std::nullopt;
    });

    add("sharing/counter-and-window-identity", few, [](Rng& rng) -> std::optional<std::string> {
        const std::size_t layers = 16;
        for (std::size_t n_share : {std::size_t{1}, std::size_t{4}, std::size_t{8}}) {
            SparsityParams p;
            p.share_every = n_share;
            LayerShareState state;
            std::vector<SparsitySelection> sels;
            Rng sel_rng(rng.next_u64());
            std::size_t L = 32, dd = 4;
            for (std::size_t layer = 0; layer < layers; ++layer) {
                Matrix q = randn_matrix(L, dd, sel_rng);
                Matrix k = randn_matrix(L, dd, sel_rng);
                sels.push_back(shared_select(q, k, p, state, sel_rng));
            }
            if (state.measurements_computed != layers / n_share) {
                return "fresh measurement count != layers / N_share";
            }
            for (std::size_t layer = 0; layer < layers; ++layer) {
                std::size_t window_start = (layer / n_share) * n_share;
                if (sels[layer].indices != sels[window_start].indices) {
                    return "selection changed inside a sharing window";
                }
            }
        }
        return std::nullopt;
    });

    add("conformer/ffn-explicit-oracle", instances, [](Rng& rng) -> std::optional<std::string> {
        std::size_t L = 4, dm = 8, dff = 6;
        FfnWeights w;
        w.pre_norm = NormParams::affine(dm); // isolate the linear/swish chain
        w.w1 = randn_matrix(dm, dff, rng);
        w.b1.resize(dff);
        for (double& b : w.b1) {
            b = rng.next_normal();
        }
        w.w2 = randn_matrix(dff, dm, rng);
        w.b2.resize(dm);
        for (double& b : w.b2) {
            b = rng.next_normal();
        }
        Matrix x = randn_matrix(L, dm, rng);
        Matrix lib = ffn_forward(x, w);
        for (std::size_t i = 0; i < L; ++i) {
            std::vector<double> hidden(dff);
            for (std::size_t j = 0; j < dff; ++j) {
                double acc = w.b1[j];
                for (std::size_t t = 0; t < dm; ++t) {
                    acc += x.at(i, t) * w.w1.at(t, j);
                }
                hidden[j] = acc / (1.0 + std::exp(-acc));
            }
            for (std::size_t c = 0; c < dm; ++c) {
                double acc = w.b2[c];
                for (std::size_t j = 0; j < dff; ++j) {
                    acc += hidden[j] * w.w2.at(j, c);
                }
                if (std::abs(acc - lib.at(i, c)) > 1e-10) {
                    return "ffn disagrees with explicit two-layer loop";
                }
            }
        }
        return std::nullopt;
    });

    add("conformer/conv-sliding-window-oracle", instances,
        [](Rng& rng) -> std::optional<std::string> {
            std::size_t L = 6, dm = 4, ks = 3;
            ConvWeights w;
            w.pre_norm = NormParams::affine(dm);
            w.pw_in = randn_matrix(dm, 2 * dm, rng);
            w.pw_in_b.resize(2 * dm);
            for (double& b : w.pw_in_b) {
                b = rng.next_normal();
            }
            w.depthwise = randn_matrix(ks, dm, rng);
            w.dw_b.resize(dm);
            for (double& b : w.dw_b) {
                b = rng.next_normal();
            }
            w.mid_norm = NormParams::affine(dm);
            w.pw_out = randn_matrix(dm, dm, rng);
            w.pw_out_b.resize(dm);
            for (double& b : w.pw_out_b) {
                b = rng.next_normal();
            }
            Matrix x = randn_matrix(L, dm, rng);
            Matrix lib = conv_module_forward(x, w);

            // explicit per-position pipeline
            auto sigmoid = [](double t) { return 1.0 / (1.0 + std::exp(-t)); };
            Matrix glu(L, dm);
            for (std::size_t i = 0; i < L; ++i) {
                for (std::size_t c = 0; c < dm; ++c) {
                    double a = w.pw_in_b[c], g = w.pw_in_b[dm + c];
                    for (std::size_t t = 0; t < dm; ++t) {
                        a += x.at(i, t) * w.pw_in.at(t, c);
                        g += x.at(i, t) * w.pw_in.at(t, dm + c);
                    }
                    glu.at(i, c) = a * sigmoid(g);
                }
            }
            for (std::size_t i = 0; i < L; ++i) {
                std::vector<double> stage(dm);
                for (std::size_t c = 0; c < dm; ++c) {
                    double acc = w.dw_b[c];
                    for (std::size_t t = 0; t < ks; ++t) {
                        std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i + t) - 1;
                        if (src >= 0 && src < static_cast<std::ptrdiff_t>(L)) {
                            acc += w.depthwise.at(t, c) *
                                   glu.at(static_cast<std::size_t>(src), c);
                        }
                    }
                    stage[c] = acc * sigmoid(acc);
                }
                for (std::size_t c = 0; c < dm; ++c) {
                    double acc = w.pw_out_b[c];
                    for (std::size_t t = 0; t < dm; ++t) {
                        acc += stage[t] * w.pw_out.at(t, c);
                    }
                    if (std::abs(acc - lib.at(i, c)) > 1e-10) {
                        return "conv module disagrees with sliding-window oracle";
                    }
                }
            }
            return std::nullopt;
        });

    add("conformer/block-sparse-parity-r1", few, [](Rng& rng) -> std::optional<std::string> {
        EncoderConfig cfg;
        cfg.num_layers = 1;
        cfg.d_model = 16;
        cfg.heads = 2;
        cfg.d_ff = 24;
        cfg.sparsity.r_sparse = 1.0;
        ConformerBlockWeights w = make_block_weights(cfg, rng);
        Matrix x = randn_matrix(12, cfg.d_model, rng);
        Matrix dense = conformer_block_forward(x, w, dense_attention_fn());
        Rng sel_rng(rng.next_u64());
        Matrix sparse =
            conformer_block_forward(x, w, prob_sparse_attention_fn(cfg.sparsity, sel_rng));
        if (d::max_abs_diff(dense, sparse) > 1e-8) {
            return "block output differs between dense and r_sparse=1 prob-sparse";
        }
        return std::nullopt;
    });

    add("conformer/encoder-share-equivalence-finite", few,
        [](Rng& rng) -> std::optional<std::string> {
            EncoderConfig cfg;
            cfg.num_layers = 16;
            cfg.d_model = 16;
            cfg.heads = 2;
            cfg.d_ff = 24;
            cfg.sparsity.r_sparse = 1.0;
            cfg.sparsity.share_every = 4;
            std::vector<ConformerBlockWeights> w = make_encoder_weights(cfg, rng);
            Matrix x = randn_matrix(10, cfg.d_model, rng);

            cfg.attn_mode = AttnMode::Dense;
            Rng r1(7);
            EncoderForwardResult dense = encoder_forward(x, cfg, w, r1);
            cfg.attn_mode = AttnMode::ProbSparse;
            Rng r2(7);
            EncoderForwardResult sparse = encoder_forward(x, cfg, w, r2);
            if (sparse.measurements_computed != cfg.num_layers / cfg.sparsity.share_every) {
                return "measurements_computed != num_layers / N_share";
            }
            for (double vdbl : sparse.output.data) {
                if (!std::isfinite(vdbl)) {
                    return "non-finite encoder output";
                }
            }
            if (d::max_abs_diff(dense.output, sparse.output) > 1e-6) {
                return "16-layer dense vs r_sparse=1 prob-sparse drift above 1e-6";
            }
            return std::nullopt;
        });

    add("bench/csv-determinism", 1, [seed](Rng&) -> std::optional<std::string> {
        bench::BenchConfig cfg;
        cfg.seq_lens = {32, 64};
        cfg.d_model = 16;
        cfg.heads = 2;
        cfg.trials = 2;
        cfg.warmup = 0;
        cfg.seed = seed;
        auto strip_wall_time = [](const std::vector<bench::BenchRecord>& recs) {
            std::ostringstream os;
            for (const auto& r : recs) {
                os << bench::mode_name(r.mode) << ',' << r.seq_len << ',' << r.trial << ','
                   << r.transient_bytes << ',' << r.params.r_sparse << ';';
            }
            return os.str();
        };
        auto a = bench::run_bench(cfg);
        auto b = bench::run_bench(cfg);
        if (a.size() != cfg.modes.size() * cfg.seq_lens.size() * cfg.trials) {
            return "record count != |modes| * |seq_lens| * trials";
        }
        if (strip_wall_time(a) != strip_wall_time(b)) {
            return "records differ beyond wall_time across identical runs";
        }
        return std::nullopt;
    });

    return results;
}

} // namespace probsparse::verify
