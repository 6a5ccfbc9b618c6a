// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include "finch/oracle.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace finch {

SelectionResult oracle_select_from_scores(const ScoreTensor &scores, int chunk_len, int prompt_len,
                                          int cache_len, int r, NormMode mode) {
    const int m = chunk_len;
    const int n_que = prompt_len;
    const int c = cache_len;
    const int columns = m + c;

    SelectionResult result;
    result.per_layer.resize(scores.size());

    for (size_t l = 0; l < scores.size(); ++l) {
        const LayerScores &s = scores[l];
        const int heads = s.heads;

        // Head-summed prompt-row scores over the [cache, chunk] columns.
        std::vector<std::vector<double>> block(n_que, std::vector<double>(columns, 0.0));
        for (int p = 0; p < n_que; ++p)
            for (int j = 0; j < columns; ++j) {
                double acc = 0.0;
                for (int h = 0; h < heads; ++h) acc += s.at(h, m + p, j);
                block[p][j] = acc;
            }

        double literal_factor = 1.0;
        if (mode == NormMode::Literal) {
            long long nonzero = 0;
            for (int p = 0; p < n_que; ++p)
                for (int j = 0; j < columns; ++j) nonzero += block[p][j] != 0.0;
            literal_factor = static_cast<double>(nonzero) / columns;
        }

        std::vector<double> agg(columns, 0.0);
        for (int p = 0; p < n_que; ++p) {
            for (int j = 0; j < columns; ++j) {
                double v = block[p][j];
                if (mode == NormMode::ColumnMean) {
                    // Queries that can see column j: all window rows for cache
                    // columns, rows at or after the chunk row otherwise.
                    const int count = j < c ? m + n_que : (m - (j - c)) + n_que;
                    v /= count;
                } else if (mode == NormMode::Literal) {
                    v *= literal_factor;
                }
                agg[j] += v;
            }
        }

        // Full sort, greater value first, smaller index on ties.
        std::vector<int> order(columns);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&agg](int a, int b) {
            if (agg[a] != agg[b]) return agg[a] > agg[b];
            return a < b;
        });
        order.resize(r);
        result.per_layer[l] = std::move(order);
    }
    return result;
}

SelectionResult oracle_selection(const Weights &weights, const KvCache &cache,
                                 std::span<const int> chunk, std::span<const int> prompt, int r,
                                 NormMode mode) {
    std::vector<int> window_tokens(chunk.begin(), chunk.end());
    window_tokens.insert(window_tokens.end(), prompt.begin(), prompt.end());
    std::vector<int> positions(window_tokens.size());
    std::iota(positions.begin(), positions.end(), cache.next_position());
    const ForwardOutput fwd = forward_chunk(weights, window_tokens, positions, cache, true);
    return oracle_select_from_scores(fwd.scores, static_cast<int>(chunk.size()),
                                     static_cast<int>(prompt.size()), cache.length(), r, mode);
}

} // namespace finch
