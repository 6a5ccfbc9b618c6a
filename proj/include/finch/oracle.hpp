// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "finch/compressor.hpp"
#include "finch/kv_cache.hpp"
#include "finch/model.hpp"

namespace finch {

// Independent re-derivation of the per-layer top-r selection, used to
// cross-check compress_step. Everything here is explicit nested loops plus a
// full sort; none of the compressor's scoring functions are called.

/// Selection from an already-computed score tensor.
SelectionResult oracle_select_from_scores(const ScoreTensor &scores, int chunk_len, int prompt_len,
                                          int cache_len, int r, NormMode mode);

/// Runs the forward pass itself (the score tensor is deterministic) and then
/// selects. Must match compress_step's selection exactly for the same inputs.
SelectionResult oracle_selection(const Weights &weights, const KvCache &cache,
                                 std::span<const int> chunk, std::span<const int> prompt, int r,
                                 NormMode mode);

} // namespace finch
