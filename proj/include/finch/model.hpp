// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "finch/kv_cache.hpp"
#include "finch/matrix.hpp"

namespace finch {

struct ModelConfig {
    int layers = 4;  // L
    int heads = 4;   // H
    int d_model = 64;
    int vocab = 256;
    int n_max = 512; // context window

    int d_head() const { return d_model / heads; }
    void validate() const; // d_model divisible by heads, even d_head, n_max >= 8
};

struct LayerWeights {
    std::vector<double> attn_norm_gain; // d_model
    Matrix wq, wk, wv, wo;              // d_model x d_model
    std::vector<double> ffn_norm_gain;  // d_model
    Matrix w1;                          // d_model x ffn_hidden
    Matrix w2;                          // ffn_hidden x d_model
};

/// Deterministic function of (config, seed). Pre-norm decoder blocks with a
/// two-matrix GELU feed-forward; ffn_hidden = 2 * d_model.
struct Weights {
    ModelConfig config;
    Matrix embedding; // vocab x d_model
    std::vector<LayerWeights> layers;
    std::vector<double> final_norm_gain;
    Matrix unembed; // d_model x vocab
};

/// Post-softmax attention probabilities of one layer: heads x M x N, h-major
/// row-major. Columns are ordered [cache, chunk, prompt]; each (head, row)
/// slice sums to 1 over the causally visible columns, masked entries are
/// exactly 0.
struct LayerScores {
    int heads = 0;
    int rows = 0; // M
    int cols = 0; // N
    std::vector<double> data;

    double at(int h, int i, int j) const {
        return data[(static_cast<size_t>(h) * rows + i) * cols + j];
    }
};

using ScoreTensor = std::vector<LayerScores>; // one entry per layer

struct ForwardOutput {
    Matrix logits;                      // M x vocab
    ScoreTensor scores;                 // empty when not requested
    std::vector<Matrix> fresh_k;        // per layer, M x d_model, rotary-rotated
    std::vector<Matrix> fresh_v;        // per layer, M x d_model
    std::vector<Matrix> fresh_k_pre;    // per layer, M x d_model, before rotation
};

/// Builds reproducible weights. Projection scales are chosen so attention
/// logits are O(1) at init, and key projections share a component with the
/// query projections so repeated token ids attract attention out of the box
/// (content-based lookup works without training).
Weights build_model(const ModelConfig &config, std::uint64_t seed);

/// One causal forward pass over a window of tokens against an existing cache.
/// window_tokens = chunk tokens followed by prompt tokens; window_positions
/// must be strictly increasing and greater than every cached position. Does
/// not mutate the cache. Set want_scores = false to skip materializing the
/// score tensor (the probabilities are still computed per row, just not
/// retained).
ForwardOutput forward_chunk(const Weights &weights, std::span<const int> window_tokens,
                            std::span<const int> window_positions, const KvCache &cache,
                            bool want_scores = true);

} // namespace finch
