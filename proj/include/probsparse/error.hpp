// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>

namespace probsparse {

// Incompatible matrix/vector dimensions. Messages name both shapes.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite values where finite arithmetic is required.
struct NumericError : std::domain_error {
    using std::domain_error::domain_error;
};

// API misuse: violated precondition that is not a shape problem
// (empty input, out-of-range sample size, stale share cache, ...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

namespace detail {

inline std::string shape_str(std::size_t rows, std::size_t cols) {
    std::ostringstream os;
    os << rows << "x" << cols;
    return os.str();
}

} // namespace detail

} // namespace probsparse
