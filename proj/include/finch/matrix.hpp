// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

#include "finch/errors.hpp"

namespace finch {

/// Dense row-major matrix of doubles. The single storage type used for
/// weights, activations, keys/values and attention scores. Entries are
/// expected finite except for -inf, which attention code uses as a mask
/// sentinel in pre-softmax logits.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data; // rows * cols, row-major

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {
        if (r < 0 || c < 0) throw ShapeError("Matrix: negative dimension");
    }
    Matrix(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
        if (r < 0 || c < 0 || data.size() != static_cast<size_t>(r) * static_cast<size_t>(c))
            throw ShapeError("Matrix: data length does not match rows*cols");
    }

    double &at(int i, int j) {
        assert(i >= 0 && i < rows && j >= 0 && j < cols);
        return data[static_cast<size_t>(i) * cols + j];
    }
    double at(int i, int j) const {
        assert(i >= 0 && i < rows && j >= 0 && j < cols);
        return data[static_cast<size_t>(i) * cols + j];
    }
    double *row(int i) {
        assert(i >= 0 && i < rows);
        return data.data() + static_cast<size_t>(i) * cols;
    }
    const double *row(int i) const {
        assert(i >= 0 && i < rows);
        return data.data() + static_cast<size_t>(i) * cols;
    }
    bool empty() const { return rows == 0 || cols == 0; }
};

/// SplitMix64 (Steele, Lea & Flood, "Fast splittable pseudorandom number
/// generators"). One 64-bit word of state, fixed multiplier constants, so the
/// integer stream is identical on every platform for a given seed. Gaussian
/// variates are derived with Box-Muller on top of the integer stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t next_below(std::uint64_t n);

    /// Standard normal variate (Box-Muller, pairs cached).
    double next_gaussian();

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace finch
