// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "finch/matrix.hpp"
#include "finch/kernels.hpp"

namespace finch::serial {

// Plain serial implementations of the hot kernels, written independently of
// the OpenMP versions. Tests compare the two paths; finch_bench reports the
// speed difference. Not linked into the shipping library targets.

Matrix matmul(const Matrix &a, const Matrix &b); // naive triple loop

Matrix softmax_rows(const Matrix &a, Mask mask);

std::vector<int> top_r_indices(std::span<const double> v, int r); // full stable sort

void attention_forward(const Matrix &q, const Matrix &keys, const Matrix &values, int heads,
                       int cache_len, double scale, Matrix &out, std::vector<double> *probs);

} // namespace finch::serial
