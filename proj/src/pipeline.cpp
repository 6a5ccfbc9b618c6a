// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include "finch/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <string>

namespace finch {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

int argmax_row(const Matrix &logits, int row) {
    const double *p = logits.row(row);
    int best = 0;
    for (int j = 1; j < logits.cols; ++j)
        if (p[j] > p[best]) best = j;
    return best;
}

// Single uncompressed pass caching every row of `tokens`.
PrefillResult vanilla_pass(const Weights &weights, std::span<const int> tokens,
                           std::span<const long long> provenance, int answer_reserve) {
    const auto start = Clock::now();
    const ModelConfig &cfg = weights.config;
    const int n = static_cast<int>(tokens.size());
    if (n < 1) throw ParameterError("prefill: empty input");
    if (n + answer_reserve > cfg.n_max)
        throw CapacityError("prefill: input of " + std::to_string(n) + " tokens plus reserve " +
                            std::to_string(answer_reserve) + " exceeds n_max = " +
                            std::to_string(cfg.n_max));

    KvCache cache(cfg.layers, cfg.d_model, cfg.d_head(), cfg.n_max);
    std::vector<int> positions(n);
    std::iota(positions.begin(), positions.end(), 0);
    ForwardOutput fwd = forward_chunk(weights, tokens, positions, cache, false);
    cache.append(fwd.fresh_k, fwd.fresh_v, positions, provenance);

    PrefillResult result{std::move(cache), Matrix(1, cfg.vocab), 1, {n}, 0.0};
    std::copy_n(fwd.logits.row(n - 1), cfg.vocab, result.last_logits.row(0));
    result.wall_ms = ms_since(start);
    return result;
}

} // namespace

const char *mode_name(Mode mode) {
    switch (mode) {
        case Mode::Finch: return "finch";
        case Mode::Vanilla: return "vanilla";
        case Mode::Truncate: return "truncate";
    }
    return "?";
}

Mode mode_from_name(const std::string &name) {
    if (name == "finch") return Mode::Finch;
    if (name == "vanilla") return Mode::Vanilla;
    if (name == "truncate") return Mode::Truncate;
    throw ParameterError("unknown mode: " + name);
}

PrefillResult prefill_finch(const Weights &weights, std::span<const int> doc,
                            std::span<const int> prompt, const CompressionConfig &config,
                            int answer_reserve, Trace *trace, bool retain_shadows) {
    const auto start = Clock::now();
    const ModelConfig &cfg = weights.config;
    if (prompt.empty()) throw ParameterError("prefill_finch: empty prompt");
    const std::vector<Chunk> chunks =
        segment_document(doc, config, cfg.n_max, static_cast<int>(prompt.size()), answer_reserve);
    PrefillState state = init_prefill_state(config, static_cast<int>(doc.size()),
                                            static_cast<int>(chunks.size()));

    PrefillResult result{KvCache(cfg.layers, cfg.d_model, cfg.d_head(), cfg.n_max, retain_shadows),
                         Matrix(), 0, {}, 0.0};
    for (const Chunk &chunk : chunks) {
        compress_step(weights, result.cache, chunk, prompt, state, config, trace);
        result.forward_calls += 1;
        result.cache_len_per_iter.push_back(result.cache.length());
    }
    result.wall_ms = ms_since(start);
    return result;
}

PrefillResult prefill_vanilla(const Weights &weights, std::span<const int> doc,
                              std::span<const int> prompt, int answer_reserve) {
    std::vector<int> tokens(doc.begin(), doc.end());
    tokens.insert(tokens.end(), prompt.begin(), prompt.end());
    std::vector<long long> provenance(tokens.size());
    for (size_t i = 0; i < doc.size(); ++i) provenance[i] = static_cast<long long>(i);
    for (size_t i = doc.size(); i < tokens.size(); ++i) provenance[i] = kProvenancePrompt;
    return vanilla_pass(weights, tokens, provenance, answer_reserve);
}

PrefillResult prefill_truncate(const Weights &weights, std::span<const int> doc,
                               std::span<const int> prompt, int target_tokens, int answer_reserve) {
    const int n_cont = static_cast<int>(doc.size());
    if (target_tokens < 1) throw ParameterError("prefill_truncate: target tokens must be positive");

    std::vector<int> kept;
    std::vector<long long> kept_offsets;
    if (target_tokens >= n_cont) {
        kept.assign(doc.begin(), doc.end());
        kept_offsets.resize(n_cont);
        std::iota(kept_offsets.begin(), kept_offsets.end(), 0LL);
    } else {
        const int head = (target_tokens + 1) / 2; // odd budgets keep the extra token up front
        const int tail = target_tokens / 2;
        for (int i = 0; i < head; ++i) {
            kept.push_back(doc[i]);
            kept_offsets.push_back(i);
        }
        for (int i = n_cont - tail; i < n_cont; ++i) {
            kept.push_back(doc[i]);
            kept_offsets.push_back(i);
        }
    }

    std::vector<int> tokens = kept;
    tokens.insert(tokens.end(), prompt.begin(), prompt.end());
    std::vector<long long> provenance = kept_offsets;
    provenance.insert(provenance.end(), prompt.size(), kProvenancePrompt);
    return vanilla_pass(weights, tokens, provenance, answer_reserve);
}

GenerateResult generate(const Weights &weights, KvCache &cache, std::span<const int> prompt_tail,
                        int max_new_tokens, const Matrix *bootstrap_logits) {
    const auto start = Clock::now();
    const ModelConfig &cfg = weights.config;
    if (max_new_tokens < 0) throw ParameterError("generate: negative token budget");
    GenerateResult result;
    if (max_new_tokens == 0) return result;
    if (prompt_tail.empty() == (bootstrap_logits == nullptr))
        throw ParameterError("generate: need exactly one of prompt_tail and bootstrap logits");
    const int tail = static_cast<int>(prompt_tail.size());
    if (cache.length() + tail + max_new_tokens > cfg.n_max)
        throw CapacityError("generate: cache " + std::to_string(cache.length()) + " + tail " +
                            std::to_string(tail) + " + budget " + std::to_string(max_new_tokens) +
                            " exceeds n_max = " + std::to_string(cfg.n_max));

    Matrix logits(1, cfg.vocab);
    if (!prompt_tail.empty()) {
        std::vector<int> positions(tail);
        std::iota(positions.begin(), positions.end(), cache.next_position());
        ForwardOutput fwd = forward_chunk(weights, prompt_tail, positions, cache, false);
        std::vector<long long> provenance(tail, kProvenancePrompt);
        cache.append(fwd.fresh_k, fwd.fresh_v, positions, provenance);
        std::copy_n(fwd.logits.row(tail - 1), cfg.vocab, logits.row(0));
    } else {
        if (bootstrap_logits->cols != cfg.vocab || bootstrap_logits->rows < 1)
            throw ShapeError("generate: bootstrap logits must be 1 x vocab");
        logits = *bootstrap_logits;
    }

    while (true) {
        const int token = argmax_row(logits, logits.rows - 1);
        result.tokens.push_back(token);
        result.steps += 1;
        if (token == kEosToken || result.steps == max_new_tokens) break;

        // Feed the emitted token; exactly one row lands in every layer.
        const int before = cache.length();
        const int pos = cache.next_position();
        const int fed[1] = {token};
        const int positions[1] = {pos};
        ForwardOutput fwd = forward_chunk(weights, fed, positions, cache, false);
        const long long provenance[1] = {kProvenanceGenerated};
        cache.append(fwd.fresh_k, fwd.fresh_v, positions, provenance);
        result.cache_growth.push_back(cache.length() - before);
        logits = std::move(fwd.logits);
    }
    result.wall_ms = ms_since(start);
    return result;
}

AnswerDistance answer_distance(std::span<const int> y_hat, std::span<const int> y_ref) {
    AnswerDistance d;
    d.exact_match = y_hat.size() == y_ref.size() && std::equal(y_hat.begin(), y_hat.end(), y_ref.begin());
    if (y_hat.empty() && y_ref.empty()) {
        d.token_f1 = 1.0;
        return d;
    }
    if (y_hat.empty() || y_ref.empty()) {
        d.token_f1 = 0.0;
        return d;
    }
    std::map<int, int> ref_counts;
    for (int t : y_ref) ref_counts[t] += 1;
    int overlap = 0;
    for (int t : y_hat) {
        auto it = ref_counts.find(t);
        if (it != ref_counts.end() && it->second > 0) {
            it->second -= 1;
            overlap += 1;
        }
    }
    if (overlap == 0) return d;
    const double precision = static_cast<double>(overlap) / y_hat.size();
    const double recall = static_cast<double>(overlap) / y_ref.size();
    d.token_f1 = 2.0 * precision * recall / (precision + recall);
    return d;
}

RunResult run_experiment(const Weights &weights, std::span<const int> doc,
                         std::span<const int> prompt, const RunConfig &config, Trace *trace,
                         KvCache *final_cache, KvCache *prefill_cache) {
    const int n_cont = static_cast<int>(doc.size());
    RunResult result;

    PrefillResult prefill;
    std::span<const int> tail; // what generate still has to feed
    switch (config.mode) {
        case Mode::Finch: {
            prefill = prefill_finch(weights, doc, prompt, config.compression, config.max_new_tokens,
                                    trace);
            tail = prompt;
            result.target_tokens = resolve_target_tokens(config.compression, n_cont);
            result.sigma = resolve_sigma(config.compression, n_cont);
            result.chunk_size = config.compression.chunk_size > 0
                                    ? config.compression.chunk_size
                                    : max_chunk_size(weights.config.n_max, result.target_tokens,
                                                     static_cast<int>(prompt.size()),
                                                     config.max_new_tokens);
            break;
        }
        case Mode::Vanilla:
            prefill = prefill_vanilla(weights, doc, prompt, config.max_new_tokens);
            result.target_tokens = 0;
            result.sigma = 1.0;
            break;
        case Mode::Truncate:
            result.target_tokens = resolve_target_tokens(config.compression, n_cont);
            result.sigma = resolve_sigma(config.compression, n_cont);
            prefill = prefill_truncate(weights, doc, prompt, result.target_tokens,
                                       config.max_new_tokens);
            break;
    }

    result.prefill_ops = prefill.forward_calls;
    result.prefill_ms = prefill.wall_ms;
    result.cache_len_at_generation = prefill.cache.length();
    result.cache_bytes_at_generation = memory_bytes(prefill.cache);
    if (prefill_cache) *prefill_cache = prefill.cache;

    GenerateResult gen = generate(weights, prefill.cache, tail, config.max_new_tokens,
                                  tail.empty() ? &prefill.last_logits : nullptr);
    result.output_tokens = std::move(gen.tokens);
    result.generation_ops = gen.steps;
    result.generation_ms = gen.wall_ms;
    if (final_cache) *final_cache = std::move(prefill.cache);
    return result;
}

} // namespace finch
