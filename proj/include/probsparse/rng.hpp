// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <unordered_set>
#include <vector>

#include "probsparse/error.hpp"

namespace probsparse {

// Deterministic PCG-XSH-RR 64/32 generator (O'Neill's pcg32). The integer
// stream is fixed by the algorithm, so equal seeds give bit-identical
// sequences on every platform. Not synchronized; one instance per thread.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        state_ = 0u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + kIncrement;
        auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform in [0, bound), bias-free via rejection sampling.
    std::uint64_t next_below(std::uint64_t bound) {
        std::uint64_t threshold = (0 - bound) % bound; // 2^64 mod bound
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) {
                return r % bound;
            }
        }
    }

    // Uniform double in (0, 1], 53-bit resolution.
    double next_unit() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1p-53;
    }

    // Standard normal via Box-Muller; the paired draw is cached.
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_unit();
        double u2 = next_unit();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    static constexpr std::uint64_t kIncrement = 1442695040888963407ULL;

    std::uint64_t state_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// k distinct indices drawn uniformly from [0, n), returned sorted ascending.
// Floyd's algorithm: O(k) draws, no O(n) scratch.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
    if (k < 1 || k > n) {
        throw ContractError("sample_without_replacement: need 1 <= k <= n, got k=" +
                            std::to_string(k) + " n=" + std::to_string(n));
    }
    std::unordered_set<std::size_t> chosen;
    chosen.reserve(k);
    for (std::size_t j = n - k; j < n; ++j) {
        auto t = static_cast<std::size_t>(rng.next_below(j + 1));
        if (!chosen.insert(t).second) {
            chosen.insert(j);
        }
    }
    std::vector<std::size_t> out(chosen.begin(), chosen.end());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace probsparse
