// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include "finch/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>

namespace finch {

Matrix matmul(const Matrix &a, const Matrix &b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                         " times " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    Matrix out(a.rows, b.cols);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < a.rows; ++i) {
        const double *arow = a.row(i);
        double *orow = out.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double *brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

namespace {

// Softmax of row[0..visible) honoring -inf sentinels; columns >= visible are
// zeroed. Returns false when every visible entry is masked.
bool softmax_row_prefix(const double *in, double *out, int cols, int visible) {
    double maxv = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < visible; ++j) maxv = std::max(maxv, in[j]);
    if (!(maxv > -std::numeric_limits<double>::infinity())) {
        std::memset(out, 0, sizeof(double) * cols);
        return false;
    }
    double sum = 0.0;
    for (int j = 0; j < visible; ++j) {
        if (in[j] == -std::numeric_limits<double>::infinity()) {
            out[j] = 0.0;
        } else {
            out[j] = std::exp(in[j] - maxv);
            sum += out[j];
        }
    }
    for (int j = 0; j < visible; ++j) out[j] /= sum;
    for (int j = visible; j < cols; ++j) out[j] = 0.0;
    return true;
}

} // namespace

Matrix softmax_rows(const Matrix &a, Mask mask, std::vector<int> *fully_masked) {
    if (mask == Mask::Causal && a.cols < a.rows)
        throw ShapeError("softmax_rows: causal mask needs cols >= rows");
    Matrix out(a.rows, a.cols);
    const int offset = a.cols - a.rows;
    std::vector<unsigned char> degenerate(a.rows, 0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < a.rows; ++i) {
        const int visible = mask == Mask::Causal ? offset + i + 1 : a.cols;
        if (!softmax_row_prefix(a.row(i), out.row(i), a.cols, visible)) degenerate[i] = 1;
    }
    if (fully_masked) {
        for (int i = 0; i < a.rows; ++i)
            if (degenerate[i]) fully_masked->push_back(i);
    }
    return out;
}

std::vector<int> top_r_indices(std::span<const double> v, int r) {
    const int n = static_cast<int>(v.size());
    if (r < 0 || r > n)
        throw ParameterError("top_r_indices: r = " + std::to_string(r) + " out of range for length " +
                             std::to_string(n));
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    auto better = [&v](int a, int b) { return v[a] > v[b] || (v[a] == v[b] && a < b); };
    std::partial_sort(idx.begin(), idx.begin() + r, idx.end(), better);
    idx.resize(r);
    return idx;
}

Matrix gaussian_fill(Rng &rng, int rows, int cols, double scale) {
    if (scale < 0.0) throw ParameterError("gaussian_fill: negative scale");
    Matrix out(rows, cols);
    for (double &x : out.data) x = rng.next_gaussian() * scale;
    return out;
}

void attention_forward(const Matrix &q, const Matrix &keys, const Matrix &values, int heads,
                       int cache_len, double scale, Matrix &out, std::vector<double> *probs) {
    const int window = q.rows;           // M
    const int total = keys.rows;         // N
    const int d_model = q.cols;
    if (keys.cols != d_model || values.cols != d_model || values.rows != total)
        throw ShapeError("attention_forward: operand shapes disagree");
    if (total != cache_len + window)
        throw ShapeError("attention_forward: key rows must be cache_len + window");
    if (d_model % heads != 0) throw ShapeError("attention_forward: d_model not divisible by heads");
    const int d_head = d_model / heads;

    out = Matrix(window, d_model);
    if (probs) probs->assign(static_cast<size_t>(heads) * window * total, 0.0);

    // One (head, row) pair per iteration; each writes a disjoint output slice
    // with serial inner reductions, so the result is thread-count independent.
#pragma omp parallel for collapse(2) schedule(static)
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < window; ++i) {
            const int visible = cache_len + i + 1;
            const double *qrow = q.row(i) + h * d_head;
            std::vector<double> row(visible);
            double maxv = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < visible; ++j) {
                const double *krow = keys.row(j) + h * d_head;
                double dot = 0.0;
                for (int t = 0; t < d_head; ++t) dot += qrow[t] * krow[t];
                row[j] = dot * scale;
                maxv = std::max(maxv, row[j]);
            }
            double sum = 0.0;
            for (int j = 0; j < visible; ++j) {
                row[j] = std::exp(row[j] - maxv);
                sum += row[j];
            }
            double *orow = out.row(i) + h * d_head;
            for (int j = 0; j < visible; ++j) {
                const double p = row[j] / sum;
                row[j] = p;
                const double *vrow = values.row(j) + h * d_head;
                for (int t = 0; t < d_head; ++t) orow[t] += p * vrow[t];
            }
            if (probs) {
                double *prow = probs->data() + (static_cast<size_t>(h) * window + i) * total;
                std::memcpy(prow, row.data(), sizeof(double) * visible);
            }
        }
    }
}

} // namespace finch
