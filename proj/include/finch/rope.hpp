// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

namespace finch {

// Rotary position embedding. Dimension pair (2i, 2i+1) of a head-width vector
// is rotated by angle position * theta_i with theta_i = base^(-2i/d_head),
// base = 10000. Rotation by a position delta composes exactly, which is what
// lets retained cache keys be moved to new positions without recomputing them.

inline constexpr double kRopeBase = 10000.0;

/// In-place rotation of one head segment. `position` may be negative
/// (rotating back), and 0 is an exact identity.
void rope_rotate_inplace(double *head_vec, int d_head, long long position);

/// Copying variant for a full head-width vector. Throws ShapeError on odd
/// length.
std::vector<double> rope_rotate(std::span<const double> vec, long long position);

/// Rotates every d_head segment of a d_model row.
void rope_rotate_row(double *row, int d_model, int d_head, long long position);

} // namespace finch
