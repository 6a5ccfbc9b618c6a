// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "finch/matrix.hpp"

namespace finch {

/// Placement of retained rows after a selection.
enum class OrderMode {
    Ranking,    // rows laid out in relevance order: selection[i] -> slot i
    Positional, // selected indices sorted ascending before placement
};

/// Provenance tag for rows that did not come from the document.
inline constexpr long long kProvenancePrompt = -1;
inline constexpr long long kProvenanceGenerated = -2;

/// Fresh per-layer K/V rows for a document chunk, as produced by a forward
/// pass: rotary-rotated keys, raw values, plus the logical position and
/// document offset of every row. pre_rope_keys may be empty; it is only
/// carried when a cache keeps shadow copies for re-rotation checks.
struct ChunkKv {
    std::vector<Matrix> keys;   // per layer, m x d_model
    std::vector<Matrix> values; // per layer, m x d_model
    std::vector<Matrix> pre_rope_keys;
    std::vector<int> positions;
    std::vector<long long> provenance;
};

/// Per-layer relevance selection: indices into the concatenated
/// [cache rows, chunk rows] column space, in relevance order.
struct SelectionResult {
    std::vector<std::vector<int>> per_layer;
};

/// Per-layer key/value store. All layers always hold the same number of rows
/// c. Keys are stored rotary-rotated at their logical positions; values are
/// position-free. Single writer; concurrent reads are fine between mutations.
class KvCache {
public:
    KvCache() = default; // empty shell, assign a real cache before use
    KvCache(int layers, int d_model, int d_head, int n_max, bool retain_pre_rope_shadows = false);

    int length() const { return length_; } // c
    int layer_count() const { return static_cast<int>(keys_.size()); }
    int d_model() const { return d_model_; }
    int n_max() const { return n_max_; }
    bool retains_shadows() const { return retain_shadows_; }

    const Matrix &keys(int layer) const { return keys_[layer]; }
    const Matrix &values(int layer) const { return values_[layer]; }
    const Matrix &pre_rope_keys(int layer) const { return pre_rope_keys_[layer]; }
    const std::vector<int> &positions(int layer) const { return positions_[layer]; }
    const std::vector<long long> &provenance(int layer) const { return provenance_[layer]; }

    /// First position a new row may take (one past the largest cached
    /// position; 0 when empty).
    int next_position() const;

    /// Appends one batch of rows to every layer. positions must be strictly
    /// increasing and start past next_position()-1; overflowing n_max is a
    /// CapacityError. pre_rope rows are required when shadows are retained.
    void append(const std::vector<Matrix> &k_rows, const std::vector<Matrix> &v_rows,
                std::span<const int> positions, std::span<const long long> provenance,
                const std::vector<Matrix> *pre_rope_rows = nullptr);

    /// Replaces the cache content with the selected rows of
    /// [cache rows, chunk rows], per layer. Retained rows take the compacted
    /// logical positions 0..r-1 (in the order given by `mode`) and their keys
    /// are re-rotated by the position delta; values are copied untouched.
    /// Duplicate or out-of-range indices raise SelectionError; all layers
    /// must select the same number of rows.
    void select_and_reposition(const ChunkKv &chunk, const SelectionResult &selection, OrderMode mode);

    /// Drops all rows (length back to 0).
    void clear();

private:
    void validate_selection(const std::vector<int> &sel, int columns, size_t expected) const;

    int d_model_ = 0;
    int d_head_ = 0;
    int n_max_ = 0;
    int length_ = 0;
    bool retain_shadows_ = false;
    std::vector<Matrix> keys_;
    std::vector<Matrix> values_;
    std::vector<Matrix> pre_rope_keys_;
    std::vector<std::vector<int>> positions_;
    std::vector<std::vector<long long>> provenance_;
};

/// Cache footprint: 2 * layers * c * d_model * bytes_per_element. The engine
/// computes in double but stores and accounts cache tensors as 32-bit floats,
/// matching the snapshot format.
long long memory_bytes(const KvCache &cache, int bytes_per_element = 4);

/// Binary snapshot (header + f32 tensors, same conventions as the weight
/// file) plus `<path>.positions.txt` with the per-layer position and
/// provenance listing.
void dump_snapshot(const KvCache &cache, const std::string &path);

} // namespace finch
