// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include "finch/weights_io.hpp"

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace finch {

namespace {

void put_u32(std::ofstream &out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char *>(b), 4);
}

std::uint32_t get_u32(std::ifstream &in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char *>(b), 4);
    if (!in) throw FormatError("weight file: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_tensor(std::ofstream &out, const std::vector<double> &data) {
    std::vector<float> f(data.size());
    for (size_t i = 0; i < data.size(); ++i) f[i] = static_cast<float>(data[i]);
    out.write(reinterpret_cast<const char *>(f.data()), static_cast<std::streamsize>(f.size() * 4));
}

void get_tensor(std::ifstream &in, std::vector<double> &data) {
    std::vector<float> f(data.size());
    in.read(reinterpret_cast<char *>(f.data()), static_cast<std::streamsize>(f.size() * 4));
    if (!in) throw FormatError("weight file: truncated tensor data");
    for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<double>(f[i]);
}

} // namespace

void save_weights(const Weights &weights, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("save_weights: cannot open " + path);
    const ModelConfig &cfg = weights.config;
    put_u32(out, kWeightsMagic);
    put_u32(out, kWeightsVersion);
    put_u32(out, static_cast<std::uint32_t>(cfg.layers));
    put_u32(out, static_cast<std::uint32_t>(cfg.heads));
    put_u32(out, static_cast<std::uint32_t>(cfg.d_model));
    put_u32(out, static_cast<std::uint32_t>(cfg.vocab));
    put_u32(out, static_cast<std::uint32_t>(cfg.n_max));

    put_tensor(out, weights.embedding.data);
    for (const LayerWeights &layer : weights.layers) {
        put_tensor(out, layer.attn_norm_gain);
        put_tensor(out, layer.wq.data);
        put_tensor(out, layer.wk.data);
        put_tensor(out, layer.wv.data);
        put_tensor(out, layer.wo.data);
        put_tensor(out, layer.ffn_norm_gain);
        put_tensor(out, layer.w1.data);
        put_tensor(out, layer.w2.data);
    }
    put_tensor(out, weights.final_norm_gain);
    put_tensor(out, weights.unembed.data);
    if (!out) throw FormatError("save_weights: write failed for " + path);
}

Weights load_weights(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("load_weights: cannot open " + path);
    if (get_u32(in) != kWeightsMagic) throw FormatError("load_weights: bad magic in " + path);
    const std::uint32_t version = get_u32(in);
    if (version != kWeightsVersion)
        throw FormatError("load_weights: unsupported version " + std::to_string(version));

    ModelConfig cfg;
    cfg.layers = static_cast<int>(get_u32(in));
    cfg.heads = static_cast<int>(get_u32(in));
    cfg.d_model = static_cast<int>(get_u32(in));
    cfg.vocab = static_cast<int>(get_u32(in));
    cfg.n_max = static_cast<int>(get_u32(in));
    cfg.validate();

    const int d = cfg.d_model;
    const int hidden = 2 * d;
    Weights w;
    w.config = cfg;
    w.embedding = Matrix(cfg.vocab, d);
    get_tensor(in, w.embedding.data);
    w.layers.resize(cfg.layers);
    for (LayerWeights &layer : w.layers) {
        layer.attn_norm_gain.resize(d);
        get_tensor(in, layer.attn_norm_gain);
        layer.wq = Matrix(d, d);
        get_tensor(in, layer.wq.data);
        layer.wk = Matrix(d, d);
        get_tensor(in, layer.wk.data);
        layer.wv = Matrix(d, d);
        get_tensor(in, layer.wv.data);
        layer.wo = Matrix(d, d);
        get_tensor(in, layer.wo.data);
        layer.ffn_norm_gain.resize(d);
        get_tensor(in, layer.ffn_norm_gain);
        layer.w1 = Matrix(d, hidden);
        get_tensor(in, layer.w1.data);
        layer.w2 = Matrix(hidden, d);
        get_tensor(in, layer.w2.data);
    }
    w.final_norm_gain.resize(d);
    get_tensor(in, w.final_norm_gain);
    w.unembed = Matrix(d, cfg.vocab);
    get_tensor(in, w.unembed.data);
    return w;
}

Weights load_weights(const std::string &path, const ModelConfig &expected) {
    Weights w = load_weights(path);
    const ModelConfig &got = w.config;
    if (got.layers != expected.layers || got.heads != expected.heads ||
        got.d_model != expected.d_model || got.vocab != expected.vocab || got.n_max != expected.n_max)
        throw FormatError("load_weights: header does not match the expected model config");
    return w;
}

} // namespace finch
