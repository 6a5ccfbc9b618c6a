// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "finch/kv_cache.hpp"
#include "finch/model.hpp"

namespace finch {

/// Synthetic retrieval probe: a short pattern of rare token ids planted at a
/// controlled document offset inside Zipf-distributed filler. The pattern
/// cycles through distinct_ids rare ids; the prompt cycles the same ids to
/// prompt_len, so every prompt token matches every distinct_ids-th needle
/// column. Fewer distinct ids concentrate the match signal.
struct NeedleSpec {
    int n_cont = 256;
    int needle_len = 8;
    double offset = 0.5; // fractional position in [0, 1]
    std::uint64_t seed = 0;
    int distinct_ids = 2;
    int prompt_len = 0; // 0 = needle_len
};

struct NeedleCorpus {
    std::vector<int> doc;
    std::vector<int> prompt; // shares the needle token ids
    std::vector<int> answer; // the needle payload
    int needle_begin = 0;    // document offset of the first needle token
    int needle_len = 0;
};

/// Filler tokens come from a Zipf-like distribution over the low vocabulary
/// range; the needle uses ids from a reserved high range the filler never
/// emits, and the prompt repeats them so prompt-to-needle attention is
/// elevated. Same seed, same corpus.
NeedleCorpus make_needle_corpus(const NeedleSpec &spec, const ModelConfig &config);

/// Fraction of needle offsets present in the cache provenance, unioned over
/// layers.
double needle_retention(const KvCache &cache, const NeedleCorpus &corpus);

/// True when the needle lies in [0, head) or [n_cont - tail, n_cont), the
/// region a head+tail truncation keeps.
double truncate_retention(const NeedleCorpus &corpus, int target_tokens);

// Token files: line-oriented, one document per line, whitespace-separated
// integer token ids.
std::vector<std::vector<int>> load_token_lines(const std::string &path);
void save_token_lines(const std::string &path, std::span<const std::vector<int>> docs);

} // namespace finch
