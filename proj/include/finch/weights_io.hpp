// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "finch/model.hpp"

namespace finch {

// Weight file, version 1. Little-endian throughout.
//
//   u32 magic   = 0x46434E31 ("1NCF" on disk, spells FNC1 big-endian)
//   u32 version = 1
//   u32 layers, heads, d_model, vocab, n_max
//
// followed by row-major 32-bit floats in this order:
//
//   embedding [vocab x d_model]
//   per layer: attn_norm_gain [d_model], wq, wk, wv, wo [d_model x d_model],
//              ffn_norm_gain [d_model], w1 [d_model x 2*d_model],
//              w2 [2*d_model x d_model]
//   final_norm_gain [d_model]
//   unembed [d_model x vocab]

inline constexpr std::uint32_t kWeightsMagic = 0x46434E31u;
inline constexpr std::uint32_t kWeightsVersion = 1u;

void save_weights(const Weights &weights, const std::string &path);

/// Loads a weight file; the model config comes from the header.
Weights load_weights(const std::string &path);

/// Loads and validates the header against an expected config; mismatch is a
/// FormatError.
Weights load_weights(const std::string &path, const ModelConfig &expected);

} // namespace finch
