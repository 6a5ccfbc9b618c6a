// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include "finch/matrix.hpp"

#include <cmath>

namespace finch {

std::uint64_t Rng::next_below(std::uint64_t n) {
    assert(n > 0);
    // Rejection from the top 2^64 % n values.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double Rng::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; u1 shifted away from 0 so the log is finite.
    const double u1 = 1.0 - next_unit();
    const double u2 = next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

} // namespace finch
