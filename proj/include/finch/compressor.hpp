// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "finch/kv_cache.hpp"
#include "finch/model.hpp"

namespace finch {

/// How the prompt-guided relevance scores are corrected for positional bias.
enum class NormMode {
    ColumnMean, // divide column j by the number of window queries that see it
    Literal,    // scale the whole submatrix by count(nonzero) / (m + c)
    None,
};

/// Compression settings. Exactly one of target_tokens / sigma must be set;
/// the other is derived per document as sigma = n_cont / k. chunk_size 0
/// means "use the largest chunk that fits" (m_max).
struct CompressionConfig {
    int target_tokens = 0; // k, 0 = derive from sigma
    double sigma = 0.0;    // 0 = derive from target_tokens
    int chunk_size = 0;    // m, 0 = m_max
    NormMode norm_mode = NormMode::ColumnMean;
    OrderMode order_mode = OrderMode::Ranking;

    void validate() const;
};

/// k for a concrete document length (floor when derived from sigma, never
/// below 1).
int resolve_target_tokens(const CompressionConfig &config, int n_cont);

/// sigma actually realized by (n_cont, k).
double resolve_sigma(const CompressionConfig &config, int n_cont);

/// Largest chunk the window can take: n_max - k - n_que - answer_reserve.
int max_chunk_size(int n_max, int target_tokens, int n_que, int answer_reserve);

/// Iteration bookkeeping carried across compress_step calls. target_tokens
/// and sigma are resolved once per document when the state is created.
struct PrefillState {
    int iteration = 0;        // it, 0-based count of completed steps
    int cache_len = 0;        // c
    int retained_budget = 0;  // r chosen for the current step
    int chunks_remaining = 0;
    int target_tokens = 0;    // resolved k
    double sigma = 1.0;       // resolved n_cont / k
};

PrefillState init_prefill_state(const CompressionConfig &config, int n_cont, int num_chunks);

struct Chunk {
    std::span<const int> tokens;
    int doc_offset = 0; // offset of tokens[0] in the document
};

/// Consecutive chunks of length m (last one may be shorter); their
/// concatenation is the document. m above the window budget is a
/// ParameterError naming the computed m_max.
std::vector<Chunk> segment_document(std::span<const int> doc, const CompressionConfig &config,
                                    int n_max, int n_que, int answer_reserve);

/// Elementwise sum of one layer's score tensor over the head axis -> M x N.
Matrix sum_heads(const LayerScores &scores);

/// Rows m..m+n_que-1 (prompt queries) and columns 0..m+c-1 (cache and chunk
/// keys) of the head-summed scores. Prompt-key columns never participate.
Matrix extract_prompt_submatrix(const Matrix &a_sum, int chunk_len, int prompt_len, int cache_len);

/// attend_counts[j] = number of window query rows (chunk and prompt) whose
/// causal mask lets them attend key column j of [cache, chunk].
std::vector<int> attend_counts(int chunk_len, int prompt_len, int cache_len);

Matrix normalize_scores(const Matrix &a_cont, std::span<const int> attend_counts, NormMode mode);

/// Column sums over the prompt rows -> relevance per [cache, chunk] column.
std::vector<double> aggregate(const Matrix &a_norm);

/// Retained-token budget for the next chunk: floor(next_chunk_len / sigma) +
/// cache_len, except the final chunk which takes exactly the remaining k
/// budget. Results above next_chunk_len + cache_len are clamped (nothing can
/// be compressed away that step).
int r_schedule(const PrefillState &state, int next_chunk_len, double sigma, int target_tokens);

/// Optional per-step capture for heatmaps and selection dumps.
struct TraceStep {
    int iteration = 0;
    int layer = 0;
    int cache_len = 0; // c at the start of the step
    int chunk_len = 0;
    Matrix prompt_attention;         // n_que x (m+c), head-summed
    std::vector<double> aggregated;  // normalized relevance per column
    std::vector<int> selected;       // relevance order
};

struct Trace {
    std::vector<TraceStep> steps;
    int iterations = 0;
};

struct CompressStepResult {
    SelectionResult selection;
    int retained = 0; // r for this step
};

/// One prefill iteration: forward [chunk ++ prompt] against the cache, score
/// every [cache, chunk] column per layer (head sum -> prompt submatrix ->
/// normalization -> aggregation -> top-r), then rebuild the cache from the
/// selected rows. Prompt rows are never cached. state.cache_len becomes r.
CompressStepResult compress_step(const Weights &weights, KvCache &cache, const Chunk &chunk,
                                 std::span<const int> prompt, PrefillState &state,
                                 const CompressionConfig &config, Trace *trace = nullptr);

} // namespace finch
