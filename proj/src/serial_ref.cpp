// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include "finch/serial_ref.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace finch::serial {

Matrix matmul(const Matrix &a, const Matrix &b) {
    if (a.cols != b.rows) throw ShapeError("serial::matmul: dimension mismatch");
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    }
    return out;
}

Matrix softmax_rows(const Matrix &a, Mask mask) {
    if (mask == Mask::Causal && a.cols < a.rows)
        throw ShapeError("serial::softmax_rows: causal mask needs cols >= rows");
    Matrix out(a.rows, a.cols);
    const int offset = a.cols - a.rows;
    for (int i = 0; i < a.rows; ++i) {
        const int visible = mask == Mask::Causal ? offset + i + 1 : a.cols;
        double maxv = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < visible; ++j) maxv = std::max(maxv, a.at(i, j));
        if (!(maxv > -std::numeric_limits<double>::infinity())) continue; // row stays zero
        double sum = 0.0;
        for (int j = 0; j < visible; ++j) {
            const double x = a.at(i, j);
            if (x != -std::numeric_limits<double>::infinity()) sum += std::exp(x - maxv);
        }
        for (int j = 0; j < visible; ++j) {
            const double x = a.at(i, j);
            if (x != -std::numeric_limits<double>::infinity()) out.at(i, j) = std::exp(x - maxv) / sum;
        }
    }
    return out;
}

std::vector<int> top_r_indices(std::span<const double> v, int r) {
    const int n = static_cast<int>(v.size());
    if (r < 0 || r > n) throw ParameterError("serial::top_r_indices: r out of range");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&v](int a, int b) { return v[a] > v[b]; });
    idx.resize(r);
    return idx;
}

void attention_forward(const Matrix &q, const Matrix &keys, const Matrix &values, int heads,
                       int cache_len, double scale, Matrix &out, std::vector<double> *probs) {
    const int window = q.rows;
    const int total = keys.rows;
    const int d_model = q.cols;
    if (keys.cols != d_model || values.cols != d_model || values.rows != total ||
        total != cache_len + window || d_model % heads != 0)
        throw ShapeError("serial::attention_forward: operand shapes disagree");
    const int d_head = d_model / heads;

    out = Matrix(window, d_model);
    if (probs) probs->assign(static_cast<size_t>(heads) * window * total, 0.0);
    std::vector<double> row(total);
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < window; ++i) {
            const int visible = cache_len + i + 1;
            double maxv = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < visible; ++j) {
                double dot = 0.0;
                for (int t = 0; t < d_head; ++t) dot += q.at(i, h * d_head + t) * keys.at(j, h * d_head + t);
                row[j] = dot * scale;
                maxv = std::max(maxv, row[j]);
            }
            double sum = 0.0;
            for (int j = 0; j < visible; ++j) {
                row[j] = std::exp(row[j] - maxv);
                sum += row[j];
            }
            for (int j = 0; j < visible; ++j) {
                const double p = row[j] / sum;
                if (probs) (*probs)[(static_cast<size_t>(h) * window + i) * total + j] = p;
                for (int t = 0; t < d_head; ++t) out.at(i, h * d_head + t) += p * values.at(j, h * d_head + t);
            }
        }
    }
}

} // namespace finch::serial
