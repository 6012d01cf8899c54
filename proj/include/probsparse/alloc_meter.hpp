// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

namespace probsparse {

// Accounts bytes of transient working buffers (score slabs, softmax weight
// matrices, sampled-key copies) requested through the library's buffer API.
// Model weights and returned results are not counted. The count is
// monotonically non-decreasing between resets.
class AllocMeter {
public:
    void charge(std::size_t bytes) { transient_bytes_ += bytes; }
    void reset() { transient_bytes_ = 0; }
    std::uint64_t transient_bytes() const { return transient_bytes_; }

private:
    std::uint64_t transient_bytes_ = 0;
};

namespace detail {

// One active meter per thread; callers doing parallel work install their own.
inline AllocMeter*& active_meter() {
    thread_local AllocMeter* meter = nullptr;
    return meter;
}

// Charges the thread's active meter, if any.
inline void charge_transient(std::size_t bytes) {
    if (AllocMeter* m = active_meter()) {
        m->charge(bytes);
    }
}

} // namespace detail

// RAII guard that makes `meter` the thread's active meter for its lifetime.
class MeterScope {
public:
    explicit MeterScope(AllocMeter& meter) : prev_(detail::active_meter()) {
        detail::active_meter() = &meter;
    }
    ~MeterScope() { detail::active_meter() = prev_; }

    MeterScope(const MeterScope&) = delete;
    MeterScope& operator=(const MeterScope&) = delete;

private:
    AllocMeter* prev_;
};

} // namespace probsparse
