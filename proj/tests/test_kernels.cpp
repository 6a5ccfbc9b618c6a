// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "doctest.h"
#include "finch/kernels.hpp"
#include "finch/serial_ref.hpp"

using namespace finch;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix random_matrix(Rng &rng, int rows, int cols) {
    Matrix m(rows, cols);
    for (double &x : m.data) x = rng.next_gaussian();
    return m;
}

double max_abs_diff(const Matrix &a, const Matrix &b) {
    REQUIRE(a.rows == b.rows);
    REQUIRE(a.cols == b.cols);
    double worst = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    return worst;
}

} // namespace

TEST_SUITE("kernels") {

TEST_CASE("matmul identity and hand-sized products") {
    const Matrix eye(2, 2, {1, 0, 0, 1});
    const Matrix b(2, 2, {5, 6, 7, 8});
    CHECK(max_abs_diff(matmul(eye, b), b) == 0.0);

    const Matrix row(1, 2, {1, 2});
    const Matrix col(2, 1, {3, 4});
    const Matrix prod = matmul(row, col);
    CHECK(prod.rows == 1);
    CHECK(prod.cols == 1);
    CHECK(prod.at(0, 0) == doctest::Approx(11.0));
}

TEST_CASE("matmul matches the naive triple-loop reference") {
    Rng rng(42);
    const Matrix a = random_matrix(rng, 8, 8);
    const Matrix b = random_matrix(rng, 8, 8);
    CHECK(max_abs_diff(matmul(a, b), serial::matmul(a, b)) < 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes") {
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST_CASE("matmul associativity on random triples") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix a = random_matrix(rng, 4, 5);
        const Matrix b = random_matrix(rng, 5, 3);
        const Matrix c = random_matrix(rng, 3, 6);
        CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
    }
}

TEST_CASE("softmax of a constant row is uniform") {
    const Matrix m(1, 3, {0, 0, 0});
    const Matrix s = softmax_rows(m, Mask::None);
    for (int j = 0; j < 3; ++j) CHECK(s.at(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("softmax with -inf sentinels keeps only the live entry") {
    const Matrix m(1, 3, {1.5, -kInf, -kInf});
    const Matrix s = softmax_rows(m, Mask::None);
    CHECK(s.at(0, 0) == 1.0);
    CHECK(s.at(0, 1) == 0.0);
    CHECK(s.at(0, 2) == 0.0);
}

TEST_CASE("softmax frozen values for [1,2,3]") {
    const Matrix m(1, 3, {1, 2, 3});
    const Matrix s = softmax_rows(m, Mask::None);
    // direct exp/sum
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(s.at(0, 0) == doctest::Approx(std::exp(1.0) / z).epsilon(1e-13));
    CHECK(s.at(0, 0) == doctest::Approx(0.09003057).epsilon(1e-7));
    CHECK(s.at(0, 1) == doctest::Approx(0.24472847).epsilon(1e-7));
    CHECK(s.at(0, 2) == doctest::Approx(0.66524096).epsilon(1e-7));
}

TEST_CASE("softmax rows sum to one over unmasked entries") {
    Rng rng(3);
    const Matrix m = random_matrix(rng, 6, 9);
    for (Mask mask : {Mask::None, Mask::Causal}) {
        const Matrix s = softmax_rows(m, mask);
        const int offset = m.cols - m.rows;
        for (int i = 0; i < s.rows; ++i) {
            double sum = 0.0;
            for (int j = 0; j < s.cols; ++j) sum += s.at(i, j);
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            if (mask == Mask::Causal)
                for (int j = offset + i + 1; j < s.cols; ++j) CHECK(s.at(i, j) == 0.0);
        }
    }
}

TEST_CASE("softmax shift invariance") {
    Rng rng(11);
    const Matrix m = random_matrix(rng, 4, 7);
    Matrix shifted = m;
    for (double &x : shifted.data) x += 123.456;
    CHECK(max_abs_diff(softmax_rows(m, Mask::None), softmax_rows(shifted, Mask::None)) < 1e-9);
}

TEST_CASE("softmax fully masked row flags and yields zeros") {
    const Matrix m(2, 2, {-kInf, -kInf, 0.0, 1.0});
    std::vector<int> flagged;
    const Matrix s = softmax_rows(m, Mask::None, &flagged);
    CHECK(flagged == std::vector<int>{0});
    CHECK(s.at(0, 0) == 0.0);
    CHECK(s.at(0, 1) == 0.0);
    CHECK(s.at(1, 0) + s.at(1, 1) == doctest::Approx(1.0));
    CHECK(std::isfinite(s.at(0, 0)));
}

TEST_CASE("softmax causal mask needs enough columns") {
    CHECK_THROWS_AS(softmax_rows(Matrix(3, 2), Mask::Causal), ShapeError);
}

TEST_CASE("top_r picks largest values in descending order") {
    const std::vector<double> v{0.1, 0.9, 0.5};
    CHECK(top_r_indices(v, 2) == std::vector<int>{1, 2});
}

TEST_CASE("top_r breaks ties toward the smaller index") {
    const std::vector<double> v{0.4, 0.4, 0.4};
    CHECK(top_r_indices(v, 2) == std::vector<int>{0, 1});
}

TEST_CASE("top_r matches the full-sort reference") {
    Rng rng(5);
    std::vector<double> v(100);
    for (double &x : v) x = rng.next_unit();
    CHECK(top_r_indices(v, 17) == serial::top_r_indices(v, 17));
}

TEST_CASE("top_r rejects r beyond the vector length") {
    CHECK_THROWS_AS(top_r_indices(std::vector<double>{1.0, 2.0}, 3), ParameterError);
}

TEST_CASE("top_r invariant under positive scaling") {
    Rng rng(8);
    std::vector<double> v(40);
    for (double &x : v) x = rng.next_gaussian();
    for (double scale : {1e-6, 0.5, 3.0, 1e8}) {
        std::vector<double> scaled(v);
        for (double &x : scaled) x *= scale;
        CHECK(top_r_indices(scaled, 10) == top_r_indices(v, 10));
    }
}

TEST_CASE("gaussian_fill is reproducible and seed-sensitive") {
    Rng a(0), b(0), c(1);
    const Matrix m1 = gaussian_fill(a, 2, 2, 1.0);
    const Matrix m2 = gaussian_fill(b, 2, 2, 1.0);
    CHECK(m1.data == m2.data);
    const Matrix m3 = gaussian_fill(c, 2, 2, 1.0);
    CHECK(m1.data != m3.data);

    Rng z(0);
    const Matrix zero = gaussian_fill(z, 3, 3, 0.0);
    for (double x : zero.data) CHECK(x == 0.0);
}

TEST_CASE("attention kernel agrees with the serial reference") {
    Rng rng(13);
    const int window = 5, cache = 3, d_model = 8, heads = 2;
    const Matrix q = random_matrix(rng, window, d_model);
    const Matrix k = random_matrix(rng, cache + window, d_model);
    const Matrix v = random_matrix(rng, cache + window, d_model);

    Matrix out_par, out_ser;
    std::vector<double> probs_par, probs_ser;
    attention_forward(q, k, v, heads, cache, 0.5, out_par, &probs_par);
    serial::attention_forward(q, k, v, heads, cache, 0.5, out_ser, &probs_ser);
    CHECK(max_abs_diff(out_par, out_ser) < 1e-12);
    REQUIRE(probs_par.size() == probs_ser.size());
    for (size_t i = 0; i < probs_par.size(); ++i)
        CHECK(probs_par[i] == doctest::Approx(probs_ser[i]).epsilon(1e-12));

    // bitwise repeatability
    Matrix out_again;
    std::vector<double> probs_again;
    attention_forward(q, k, v, heads, cache, 0.5, out_again, &probs_again);
    CHECK(out_par.data == out_again.data);
    CHECK(probs_par == probs_again);
}

} // TEST_SUITE
