// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "finch/matrix.hpp"

namespace finch {

// OpenMP-parallel compute kernels. Every kernel assigns each output element
// to exactly one thread and runs its reduction in a fixed serial order, so
// results are bitwise identical for any thread count. Serial twins of the
// heavy kernels live in finch::serial (serial_ref.hpp) and are used as test
// oracles and as the benchmark baseline.

enum class Mask {
    None,
    Causal, // row i sees columns j <= i + (cols - rows); requires cols >= rows
};

/// a (p x q) times b (q x s). Accumulates in double.
Matrix matmul(const Matrix &a, const Matrix &b);

/// Row-wise softmax with max-subtraction. -inf entries act as mask sentinels
/// and come out exactly 0, as do columns hidden by the causal mask. A row with
/// no unmasked entry becomes all zeros (never NaN); its index is appended to
/// *fully_masked when given.
Matrix softmax_rows(const Matrix &a, Mask mask, std::vector<int> *fully_masked = nullptr);

/// Indices of the r largest values, in descending value order. Ties resolve to
/// the smaller index first, so the result is deterministic.
std::vector<int> top_r_indices(std::span<const double> v, int r);

/// Matrix of i.i.d. N(0, scale^2) entries, filled row-major from the rng
/// stream. Sequential by construction (the stream is the contract).
Matrix gaussian_fill(Rng &rng, int rows, int cols, double scale);

/// Multi-head scaled-dot-product attention for one layer.
///
/// q:        M x d_model, rotary-rotated query rows (window).
/// keys:     N x d_model, rotary-rotated key rows, N = cache_len + M,
///           ordered [cache rows, window rows].
/// values:   N x d_model, raw value rows in the same order.
/// Window row i attends to the cache_len cache columns plus window columns
/// <= i. Scores are scaled by `scale` (1/sqrt(d_head)) and softmax-normalized.
/// Writes the per-head contexts concatenated into out (M x d_model). When
/// probs != nullptr, stores the post-softmax probabilities as heads x M x N
/// (h-major, row-major), masked entries exactly 0.
void attention_forward(const Matrix &q, const Matrix &keys, const Matrix &values, int heads,
                       int cache_len, double scale, Matrix &out, std::vector<double> *probs);

} // namespace finch
