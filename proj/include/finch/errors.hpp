// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace finch {

// Dimension disagreement between operands (matmul, submatrix extraction, ...).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A caller-supplied value is out of range (r > n, chunk size above the budget, ...).
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// An operation would exceed the model context window n_max.
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A selection vector is malformed (duplicates, out-of-range columns).
struct SelectionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Input is degenerate in a way the maths cannot absorb (zero attend counts, ...).
struct DegenerateInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File-format problems when loading weights or cache snapshots.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace finch
