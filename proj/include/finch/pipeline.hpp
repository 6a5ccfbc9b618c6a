// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "finch/compressor.hpp"
#include "finch/model.hpp"

namespace finch {

inline constexpr int kEosToken = 0;

enum class Mode { Finch, Vanilla, Truncate };

const char *mode_name(Mode mode);
Mode mode_from_name(const std::string &name);

struct RunConfig {
    Mode mode = Mode::Finch;
    CompressionConfig compression;
    int max_new_tokens = 16; // a
    std::uint64_t seed = 0;
};

/// Cache state handed to the generation stage, plus prefill accounting.
/// last_logits holds the final-position logits for modes whose prefill
/// already consumed the prompt (vanilla, truncate); finch leaves it empty and
/// feeds the prompt at generation time.
struct PrefillResult {
    KvCache cache;
    Matrix last_logits;                 // 1 x vocab or empty
    int forward_calls = 0;              // sequential ops
    std::vector<int> cache_len_per_iter;
    double wall_ms = 0.0;
};

/// Chunked compressing prefill; ends with exactly k cached rows per layer.
PrefillResult prefill_finch(const Weights &weights, std::span<const int> doc,
                            std::span<const int> prompt, const CompressionConfig &config,
                            int answer_reserve, Trace *trace = nullptr,
                            bool retain_shadows = false);

/// Single uncompressed pass over [doc ++ prompt]; n + answer_reserve above
/// n_max is a CapacityError.
PrefillResult prefill_vanilla(const Weights &weights, std::span<const int> doc,
                              std::span<const int> prompt, int answer_reserve = 0);

/// Keeps the first ceil(k/2) and last floor(k/2) document tokens, then
/// vanilla-prefills the result. k >= n_cont keeps the whole document.
PrefillResult prefill_truncate(const Weights &weights, std::span<const int> doc,
                               std::span<const int> prompt, int target_tokens,
                               int answer_reserve = 0);

struct GenerateResult {
    std::vector<int> tokens;
    int steps = 0;                  // tokens emitted
    std::vector<int> cache_growth;  // rows appended per per-token step
    double wall_ms = 0.0;
};

/// Greedy decoding against an existing cache. prompt_tail is whatever part of
/// the input is not cached yet (the whole prompt for finch, empty for vanilla
/// and truncate, which pass the prefill logits as bootstrap instead). Exactly
/// one of the two must be provided. Every per-token step appends exactly one
/// K/V row per layer; generation stops at max_new_tokens or on the
/// end-of-sequence token.
GenerateResult generate(const Weights &weights, KvCache &cache, std::span<const int> prompt_tail,
                        int max_new_tokens, const Matrix *bootstrap_logits = nullptr);

struct AnswerDistance {
    int exact_match = 0;  // 1 iff sequences identical
    double token_f1 = 0.0;
};

/// Exact match plus token-multiset F1. Both empty -> F1 = 1; one empty -> 0.
AnswerDistance answer_distance(std::span<const int> y_hat, std::span<const int> y_ref);

struct RunResult {
    std::vector<int> output_tokens;
    int prefill_ops = 0;
    int generation_ops = 0;
    int cache_len_at_generation = 0;
    long long cache_bytes_at_generation = 0;
    double prefill_ms = 0.0;
    double generation_ms = 0.0;
    int target_tokens = 0;   // resolved k
    double sigma = 0.0;      // resolved sigma
    int chunk_size = 0;      // resolved m (finch only)
};

/// Prefill in the configured mode, then generate. The cache is measured at
/// the prefill/generation boundary.
RunResult run_experiment(const Weights &weights, std::span<const int> doc,
                         std::span<const int> prompt, const RunConfig &config,
                         Trace *trace = nullptr, KvCache *final_cache = nullptr,
                         KvCache *prefill_cache = nullptr);

} // namespace finch
