// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include "finch/model.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "finch/kernels.hpp"
#include "finch/rope.hpp"

namespace finch {

namespace {

constexpr double kRmsEps = 1e-6;

// Fraction of the key projection shared with the query projection. With
// independent random projections, two occurrences of the same token id score
// no higher than chance; sharing a component makes same-id query/key pairs
// attract, so prompt tokens can pull up matching context tokens at init.
constexpr double kQkAlign = 0.8;

double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
}

Matrix rmsnorm_rows(const Matrix &x, const std::vector<double> &gain) {
    Matrix out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const double *in = x.row(i);
        double ss = 0.0;
        for (int j = 0; j < x.cols; ++j) ss += in[j] * in[j];
        const double inv = 1.0 / std::sqrt(ss / x.cols + kRmsEps);
        double *o = out.row(i);
        for (int j = 0; j < x.cols; ++j) o[j] = in[j] * inv * gain[j];
    }
    return out;
}

void add_inplace(Matrix &x, const Matrix &y) {
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += y.data[i];
}

// cos/sin of position * theta_i for every window row, shared by q and k
// across all layers.
struct RotationTable {
    int d_half;
    std::vector<double> cosv, sinv; // rows x d_half

    RotationTable(std::span<const int> positions, int d_head) : d_half(d_head / 2) {
        const int rows = static_cast<int>(positions.size());
        cosv.resize(static_cast<size_t>(rows) * d_half);
        sinv.resize(static_cast<size_t>(rows) * d_half);
        for (int i = 0; i < rows; ++i) {
            for (int t = 0; t < d_half; ++t) {
                const double theta = std::pow(kRopeBase, -2.0 * t / d_head);
                const double angle = positions[i] * theta;
                cosv[static_cast<size_t>(i) * d_half + t] = std::cos(angle);
                sinv[static_cast<size_t>(i) * d_half + t] = std::sin(angle);
            }
        }
    }

    void rotate_row(double *row, int d_model, int i) const {
        const double *c = cosv.data() + static_cast<size_t>(i) * d_half;
        const double *s = sinv.data() + static_cast<size_t>(i) * d_half;
        for (int h = 0; h * 2 * d_half < d_model; ++h) {
            double *seg = row + h * 2 * d_half;
            for (int t = 0; t < d_half; ++t) {
                const double x = seg[2 * t];
                const double y = seg[2 * t + 1];
                seg[2 * t] = x * c[t] - y * s[t];
                seg[2 * t + 1] = x * s[t] + y * c[t];
            }
        }
    }
};

Matrix concat_rows(const Matrix &top, const Matrix &bottom) {
    if (top.rows == 0) return bottom;
    Matrix out(top.rows + bottom.rows, bottom.cols);
    std::memcpy(out.data.data(), top.data.data(), top.data.size() * sizeof(double));
    std::memcpy(out.data.data() + top.data.size(), bottom.data.data(),
                bottom.data.size() * sizeof(double));
    return out;
}

} // namespace

void ModelConfig::validate() const {
    if (layers < 1 || heads < 1 || d_model < heads || vocab < 2)
        throw ParameterError("ModelConfig: layers/heads/d_model/vocab out of range");
    if (d_model % heads != 0) throw ParameterError("ModelConfig: d_model must be divisible by heads");
    if ((d_model / heads) % 2 != 0) throw ParameterError("ModelConfig: d_head must be even");
    if (n_max < 8) throw ParameterError("ModelConfig: n_max must be at least 8");
}

Weights build_model(const ModelConfig &config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const int d = config.d_model;
    const int hidden = 2 * d;
    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(d));

    Weights w;
    w.config = config;
    w.embedding = gaussian_fill(rng, config.vocab, d, 1.0);
    w.layers.resize(config.layers);
    for (auto &layer : w.layers) {
        layer.attn_norm_gain.assign(d, 1.0);
        layer.ffn_norm_gain.assign(d, 1.0);
        layer.wq = gaussian_fill(rng, d, d, proj_scale);
        Matrix k_noise = gaussian_fill(rng, d, d, proj_scale);
        layer.wk = Matrix(d, d);
        const double align = kQkAlign;
        const double ortho = std::sqrt(1.0 - align * align);
        for (size_t i = 0; i < layer.wk.data.size(); ++i)
            layer.wk.data[i] = align * layer.wq.data[i] + ortho * k_noise.data[i];
        layer.wv = gaussian_fill(rng, d, d, proj_scale);
        layer.wo = gaussian_fill(rng, d, d, proj_scale);
        layer.w1 = gaussian_fill(rng, d, hidden, proj_scale);
        layer.w2 = gaussian_fill(rng, hidden, d, 1.0 / std::sqrt(static_cast<double>(hidden)));
    }
    w.final_norm_gain.assign(d, 1.0);
    w.unembed = gaussian_fill(rng, d, config.vocab, proj_scale);
    return w;
}

ForwardOutput forward_chunk(const Weights &weights, std::span<const int> window_tokens,
                            std::span<const int> window_positions, const KvCache &cache,
                            bool want_scores) {
    const ModelConfig &cfg = weights.config;
    const int window = static_cast<int>(window_tokens.size());
    const int c = cache.length();
    if (window < 1) throw ParameterError("forward_chunk: empty window");
    if (static_cast<int>(window_positions.size()) != window)
        throw ShapeError("forward_chunk: positions/tokens length mismatch");
    if (c + window > cfg.n_max)
        throw CapacityError("forward_chunk: window of " + std::to_string(window) + " rows on cache of " +
                            std::to_string(c) + " exceeds n_max = " + std::to_string(cfg.n_max));
    const int floor_pos = cache.next_position();
    if (window_positions[0] < floor_pos)
        throw ParameterError("forward_chunk: positions must lie past every cached position");
    for (int i = 0; i < window; ++i) {
        if (window_tokens[i] < 0 || window_tokens[i] >= cfg.vocab)
            throw ParameterError("forward_chunk: token id out of vocabulary");
        if (i > 0 && window_positions[i] <= window_positions[i - 1])
            throw ParameterError("forward_chunk: positions must be strictly increasing");
    }

    const int d = cfg.d_model;
    const int d_head = cfg.d_head();
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));
    const RotationTable rot(window_positions, d_head);

    Matrix x(window, d);
    for (int i = 0; i < window; ++i)
        std::memcpy(x.row(i), weights.embedding.row(window_tokens[i]), sizeof(double) * d);

    ForwardOutput out;
    out.fresh_k.resize(cfg.layers);
    out.fresh_v.resize(cfg.layers);
    out.fresh_k_pre.resize(cfg.layers);
    if (want_scores) out.scores.resize(cfg.layers);

    for (int l = 0; l < cfg.layers; ++l) {
        const LayerWeights &lw = weights.layers[l];
        const Matrix attn_in = rmsnorm_rows(x, lw.attn_norm_gain);
        Matrix q = matmul(attn_in, lw.wq);
        Matrix k = matmul(attn_in, lw.wk);
        Matrix v = matmul(attn_in, lw.wv);
        out.fresh_k_pre[l] = k;
        for (int i = 0; i < window; ++i) {
            rot.rotate_row(q.row(i), d, i);
            rot.rotate_row(k.row(i), d, i);
        }

        const Matrix keys_all = concat_rows(cache.keys(l), k);
        const Matrix values_all = concat_rows(cache.values(l), v);
        Matrix ctx;
        std::vector<double> *probs = nullptr;
        if (want_scores) {
            out.scores[l].heads = cfg.heads;
            out.scores[l].rows = window;
            out.scores[l].cols = c + window;
            probs = &out.scores[l].data;
        }
        attention_forward(q, keys_all, values_all, cfg.heads, c, scale, ctx, probs);
        add_inplace(x, matmul(ctx, lw.wo));

        const Matrix ffn_in = rmsnorm_rows(x, lw.ffn_norm_gain);
        Matrix h = matmul(ffn_in, lw.w1);
        for (double &value : h.data) value = gelu(value);
        add_inplace(x, matmul(h, lw.w2));

        out.fresh_k[l] = std::move(k);
        out.fresh_v[l] = std::move(v);
    }

    out.logits = matmul(rmsnorm_rows(x, weights.final_norm_gain), weights.unembed);
    return out;
}

} // namespace finch
