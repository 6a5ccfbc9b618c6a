// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include "finch/compressor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "finch/kernels.hpp"

namespace finch {

void CompressionConfig::validate() const {
    const bool has_k = target_tokens > 0;
    const bool has_sigma = sigma > 0.0;
    if (has_k == has_sigma)
        throw ParameterError("CompressionConfig: exactly one of target_tokens and sigma must be set");
    if (has_sigma && sigma < 1.0) throw ParameterError("CompressionConfig: sigma must be >= 1");
    if (chunk_size < 0) throw ParameterError("CompressionConfig: negative chunk size");
}

int resolve_target_tokens(const CompressionConfig &config, int n_cont) {
    config.validate();
    if (config.target_tokens > 0) return config.target_tokens;
    return std::max(1, static_cast<int>(std::floor(n_cont / config.sigma)));
}

double resolve_sigma(const CompressionConfig &config, int n_cont) {
    const int k = resolve_target_tokens(config, n_cont);
    return static_cast<double>(n_cont) / k;
}

int max_chunk_size(int n_max, int target_tokens, int n_que, int answer_reserve) {
    return n_max - target_tokens - n_que - answer_reserve;
}

std::vector<Chunk> segment_document(std::span<const int> doc, const CompressionConfig &config,
                                    int n_max, int n_que, int answer_reserve) {
    const int n_cont = static_cast<int>(doc.size());
    if (n_cont < 1) throw ParameterError("segment_document: empty document");
    const int k = resolve_target_tokens(config, n_cont);
    const int m_max = max_chunk_size(n_max, k, n_que, answer_reserve);
    if (m_max < 1)
        throw ParameterError("segment_document: no chunk budget left (m_max = " + std::to_string(m_max) +
                             ")");
    const int m = config.chunk_size > 0 ? config.chunk_size : m_max;
    if (m > m_max)
        throw ParameterError("segment_document: chunk size " + std::to_string(m) +
                             " exceeds m_max = " + std::to_string(m_max));

    std::vector<Chunk> chunks;
    for (int begin = 0; begin < n_cont; begin += m)
        chunks.push_back({doc.subspan(begin, std::min(m, n_cont - begin)), begin});
    return chunks;
}

Matrix sum_heads(const LayerScores &scores) {
    Matrix out(scores.rows, scores.cols);
    for (int h = 0; h < scores.heads; ++h) {
        const double *slice = scores.data.data() + static_cast<size_t>(h) * scores.rows * scores.cols;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += slice[i];
    }
    return out;
}

Matrix extract_prompt_submatrix(const Matrix &a_sum, int chunk_len, int prompt_len, int cache_len) {
    if (a_sum.rows != chunk_len + prompt_len || a_sum.cols != chunk_len + prompt_len + cache_len)
        throw ShapeError("extract_prompt_submatrix: summed scores are " + std::to_string(a_sum.rows) +
                         "x" + std::to_string(a_sum.cols) + ", expected (m+n_que) x (m+n_que+c)");
    Matrix out(prompt_len, chunk_len + cache_len);
    for (int i = 0; i < prompt_len; ++i)
        for (int j = 0; j < chunk_len + cache_len; ++j) out.at(i, j) = a_sum.at(chunk_len + i, j);
    return out;
}

std::vector<int> attend_counts(int chunk_len, int prompt_len, int cache_len) {
    if (chunk_len < 0 || prompt_len < 1 || cache_len < 0)
        throw ParameterError("attend_counts: bad window geometry");
    std::vector<int> counts(static_cast<size_t>(chunk_len + cache_len));
    const int window = chunk_len + prompt_len;
    // Cache columns precede the whole window; chunk column i is visible to
    // chunk rows >= i plus every prompt row.
    for (int j = 0; j < cache_len; ++j) counts[j] = window;
    for (int i = 0; i < chunk_len; ++i) counts[cache_len + i] = (chunk_len - i) + prompt_len;
    return counts;
}

Matrix normalize_scores(const Matrix &a_cont, std::span<const int> counts, NormMode mode) {
    if (mode == NormMode::None) return a_cont;
    Matrix out = a_cont;
    if (mode == NormMode::ColumnMean) {
        if (static_cast<int>(counts.size()) != a_cont.cols)
            throw ShapeError("normalize_scores: one attend count per column required");
        for (int j = 0; j < a_cont.cols; ++j)
            if (counts[j] < 1) throw DegenerateInputError("normalize_scores: zero attend count");
        for (int i = 0; i < out.rows; ++i)
            for (int j = 0; j < out.cols; ++j) out.at(i, j) /= counts[j];
        return out;
    }
    // Literal: one global factor count(nonzero) / (m + c).
    if (a_cont.cols < 1) throw DegenerateInputError("normalize_scores: empty score matrix");
    long long nonzero = 0;
    for (double x : a_cont.data) nonzero += x != 0.0;
    const double factor = static_cast<double>(nonzero) / a_cont.cols;
    for (double &x : out.data) x *= factor;
    return out;
}

std::vector<double> aggregate(const Matrix &a_norm) {
    std::vector<double> out(a_norm.cols, 0.0);
    for (int i = 0; i < a_norm.rows; ++i) {
        const double *row = a_norm.row(i);
        for (int j = 0; j < a_norm.cols; ++j) out[j] += row[j];
    }
    return out;
}

int r_schedule(const PrefillState &state, int next_chunk_len, double sigma, int target_tokens) {
    if (sigma < 1.0) throw ParameterError("r_schedule: sigma must be >= 1");
    if (next_chunk_len < 1) throw ParameterError("r_schedule: empty chunk");
    const int columns = next_chunk_len + state.cache_len;
    int r;
    if (state.chunks_remaining <= 1) {
        r = target_tokens; // final iteration lands the budget exactly
    } else {
        r = static_cast<int>(std::floor(next_chunk_len / sigma)) + state.cache_len;
    }
    return std::clamp(r, 1, columns);
}

PrefillState init_prefill_state(const CompressionConfig &config, int n_cont, int num_chunks) {
    PrefillState state;
    state.chunks_remaining = num_chunks;
    state.target_tokens = resolve_target_tokens(config, n_cont);
    state.sigma = std::max(1.0, resolve_sigma(config, n_cont));
    return state;
}

CompressStepResult compress_step(const Weights &weights, KvCache &cache, const Chunk &chunk,
                                 std::span<const int> prompt, PrefillState &state,
                                 const CompressionConfig &config, Trace *trace) {
    const int m = static_cast<int>(chunk.tokens.size());
    const int n_que = static_cast<int>(prompt.size());
    const int c = cache.length();
    if (m < 1 || n_que < 1) throw ParameterError("compress_step: chunk and prompt must be non-empty");
    if (state.chunks_remaining < 1) throw ParameterError("compress_step: no chunks left in the schedule");

    // Window = [chunk ++ prompt] at the next contiguous positions.
    std::vector<int> window_tokens(chunk.tokens.begin(), chunk.tokens.end());
    window_tokens.insert(window_tokens.end(), prompt.begin(), prompt.end());
    std::vector<int> positions(window_tokens.size());
    std::iota(positions.begin(), positions.end(), cache.next_position());

    const ForwardOutput fwd = forward_chunk(weights, window_tokens, positions, cache, true);

    const int r = r_schedule(state, m, state.sigma, state.target_tokens);
    const int layers = weights.config.layers;
    const std::vector<int> counts = attend_counts(m, n_que, c);

    SelectionResult selection;
    selection.per_layer.resize(layers);
    std::vector<Matrix> prompt_attn(trace ? layers : 0);
    std::vector<std::vector<double>> aggregates(trace ? layers : 0);

    // Layers are scored independently; the merge order is fixed by index.
#pragma omp parallel for schedule(static)
    for (int l = 0; l < layers; ++l) {
        const Matrix a_sum = sum_heads(fwd.scores[l]);
        const Matrix a_cont = extract_prompt_submatrix(a_sum, m, n_que, c);
        const Matrix a_norm = normalize_scores(a_cont, counts, config.norm_mode);
        const std::vector<double> agg = aggregate(a_norm);
        selection.per_layer[l] = top_r_indices(agg, r);
        if (trace) {
            prompt_attn[l] = a_cont;
            aggregates[l] = agg;
        }
    }

    if (trace) {
        for (int l = 0; l < layers; ++l) {
            TraceStep step;
            step.iteration = state.iteration;
            step.layer = l;
            step.cache_len = c;
            step.chunk_len = m;
            step.prompt_attention = std::move(prompt_attn[l]);
            step.aggregated = std::move(aggregates[l]);
            step.selected = selection.per_layer[l];
            trace->steps.push_back(std::move(step));
        }
        trace->iterations = state.iteration + 1;
    }

    // Only context rows are retained; the prompt slice of the window is
    // dropped and re-fed with the next chunk.
    ChunkKv chunk_kv;
    chunk_kv.keys.resize(layers);
    chunk_kv.values.resize(layers);
    if (cache.retains_shadows()) chunk_kv.pre_rope_keys.resize(layers);
    for (int l = 0; l < layers; ++l) {
        auto take_rows = [m](const Matrix &src) {
            Matrix out(m, src.cols);
            std::copy_n(src.data.begin(), static_cast<size_t>(m) * src.cols, out.data.begin());
            return out;
        };
        chunk_kv.keys[l] = take_rows(fwd.fresh_k[l]);
        chunk_kv.values[l] = take_rows(fwd.fresh_v[l]);
        if (cache.retains_shadows()) chunk_kv.pre_rope_keys[l] = take_rows(fwd.fresh_k_pre[l]);
    }
    chunk_kv.positions.assign(positions.begin(), positions.begin() + m);
    chunk_kv.provenance.resize(m);
    for (int i = 0; i < m; ++i) chunk_kv.provenance[i] = chunk.doc_offset + i;

    cache.select_and_reposition(chunk_kv, selection, config.order_mode);

    state.iteration += 1;
    state.cache_len = cache.length();
    state.retained_budget = r;
    state.chunks_remaining -= 1;
    return {std::move(selection), r};
}

} // namespace finch
