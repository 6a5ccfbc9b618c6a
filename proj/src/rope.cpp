// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include "finch/rope.hpp"

#include <cmath>

#include "finch/errors.hpp"

namespace finch {

void rope_rotate_inplace(double *head_vec, int d_head, long long position) {
    if (d_head % 2 != 0) throw ShapeError("rope_rotate: head width must be even");
    if (position == 0) return; // exact identity
    for (int i = 0; i * 2 < d_head; ++i) {
        const double theta = std::pow(kRopeBase, -2.0 * i / d_head);
        const double angle = static_cast<double>(position) * theta;
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double x = head_vec[2 * i];
        const double y = head_vec[2 * i + 1];
        head_vec[2 * i] = x * c - y * s;
        head_vec[2 * i + 1] = x * s + y * c;
    }
}

std::vector<double> rope_rotate(std::span<const double> vec, long long position) {
    std::vector<double> out(vec.begin(), vec.end());
    rope_rotate_inplace(out.data(), static_cast<int>(out.size()), position);
    return out;
}

void rope_rotate_row(double *row, int d_model, int d_head, long long position) {
    for (int h = 0; h * d_head < d_model; ++h) rope_rotate_inplace(row + h * d_head, d_head, position);
}

} // namespace finch
