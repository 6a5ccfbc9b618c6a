// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner: single runs, parameter sweeps, needle corpus generation,
// oracle cross-checks and attention heatmap dumps over the toy engine.

#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "finch/corpus.hpp"
#include "finch/oracle.hpp"
#include "finch/pipeline.hpp"
#include "finch/sweep.hpp"
#include "finch/weights_io.hpp"

using namespace finch;

namespace {

struct CommonOpts {
    ModelConfig model;
    std::uint64_t seed = 1;
    std::string weights_file;
    std::string save_weights_file;
    CLI::Option *config_flags[5] = {};
};

void add_model_flags(CLI::App *cmd, CommonOpts &opts) {
    opts.config_flags[0] = cmd->add_option("--layers", opts.model.layers, "Transformer layers");
    opts.config_flags[1] = cmd->add_option("--heads", opts.model.heads, "Attention heads");
    opts.config_flags[2] = cmd->add_option("--d-model", opts.model.d_model, "Embedding width");
    opts.config_flags[3] = cmd->add_option("--vocab", opts.model.vocab, "Vocabulary size");
    opts.config_flags[4] = cmd->add_option("--n-max", opts.model.n_max, "Context window");
    cmd->add_option("--seed", opts.seed, "Seed for weights and corpora");
    cmd->add_option("--weights", opts.weights_file, "Load weights from file instead of building");
    cmd->add_option("--save-weights", opts.save_weights_file, "Write the weights file and continue");
}

Weights resolve_weights(const CommonOpts &opts) {
    Weights w;
    if (opts.weights_file.empty()) {
        w = build_model(opts.model, opts.seed);
    } else {
        bool explicit_config = false;
        for (const CLI::Option *flag : opts.config_flags)
            explicit_config |= flag != nullptr && flag->count() > 0;
        // an explicitly requested shape must match the file header
        w = explicit_config ? load_weights(opts.weights_file, opts.model)
                            : load_weights(opts.weights_file);
    }
    if (!opts.save_weights_file.empty()) save_weights(w, opts.save_weights_file);
    return w;
}

NormMode parse_norm(const std::string &name) {
    if (name == "column-mean") return NormMode::ColumnMean;
    if (name == "literal") return NormMode::Literal;
    if (name == "none") return NormMode::None;
    throw ParameterError("unknown norm mode: " + name);
}

OrderMode parse_order(const std::string &name) {
    if (name == "ranking") return OrderMode::Ranking;
    if (name == "positional") return OrderMode::Positional;
    throw ParameterError("unknown order mode: " + name);
}

std::vector<int> first_doc(const std::string &path) {
    const auto docs = load_token_lines(path);
    if (docs.empty()) throw FormatError(path + ": no token lines");
    return docs[0];
}

struct RunOpts {
    CommonOpts common;
    std::string mode = "finch";
    int target_tokens = 0;
    double sigma = 0.0;
    int chunk_size = 0;
    std::string norm_mode = "column-mean";
    std::string order_mode = "ranking";
    int max_new_tokens = 8;
    std::string doc_file, prompt_file, answer_file;
    std::string csv_out;
    bool trace = false;
    std::string trace_out = "trace.csv";
    std::string dump_cache_file;
    // synthetic fallback corpus
    int n_cont = 256;
    int needle_len = 6;
    double offset = 0.5;
    int distinct_ids = 1;
    int prompt_len = 16;
};

int do_run(const RunOpts &opts) {
    const Weights w = resolve_weights(opts.common);

    std::vector<int> doc, prompt, answer;
    double needle_offset = -1.0;
    NeedleCorpus corpus;
    bool have_corpus = false;
    if (!opts.doc_file.empty()) {
        doc = first_doc(opts.doc_file);
        if (opts.prompt_file.empty()) throw ParameterError("--doc requires --prompt");
        prompt = first_doc(opts.prompt_file);
        if (!opts.answer_file.empty()) answer = first_doc(opts.answer_file);
    } else {
        corpus = make_needle_corpus({opts.n_cont, opts.needle_len, opts.offset, opts.common.seed,
                                     opts.distinct_ids, opts.prompt_len},
                                    w.config);
        doc = corpus.doc;
        prompt = corpus.prompt;
        answer = corpus.answer;
        needle_offset = opts.offset;
        have_corpus = true;
        std::printf("synthetic needle corpus: n_cont=%d needle_len=%d offset=%.2f seed=%llu\n",
                    opts.n_cont, opts.needle_len, opts.offset,
                    static_cast<unsigned long long>(opts.common.seed));
    }

    RunConfig rc;
    rc.mode = mode_from_name(opts.mode);
    rc.max_new_tokens = opts.max_new_tokens;
    rc.seed = opts.common.seed;
    if (rc.mode != Mode::Vanilla) {
        rc.compression.target_tokens = opts.target_tokens;
        rc.compression.sigma = opts.sigma;
        if (opts.target_tokens == 0 && opts.sigma == 0.0) rc.compression.sigma = 4.0;
        rc.compression.chunk_size = opts.chunk_size;
        rc.compression.norm_mode = parse_norm(opts.norm_mode);
        rc.compression.order_mode = parse_order(opts.order_mode);
    }

    Trace trace;
    KvCache cache;
    const RunResult result = run_experiment(w, doc, prompt, rc, opts.trace ? &trace : nullptr, &cache);

    std::printf("mode=%s n_cont=%zu n_que=%zu k=%d sigma=%.3f m=%d\n", opts.mode.c_str(), doc.size(),
                prompt.size(), result.target_tokens, result.sigma, result.chunk_size);
    std::printf("prefill: %d ops, %.3f ms; generation: %d ops, %.3f ms\n", result.prefill_ops,
                result.prefill_ms, result.generation_ops, result.generation_ms);
    std::printf("cache at generation start: %d rows, %lld bytes\n", result.cache_len_at_generation,
                result.cache_bytes_at_generation);
    std::printf("output tokens:");
    for (int t : result.output_tokens) std::printf(" %d", t);
    std::printf("\n");

    ReportRow row;
    row.mode = opts.mode;
    row.target_tokens = result.target_tokens;
    row.sigma = result.sigma;
    row.chunk_size = result.chunk_size;
    row.norm_mode = opts.norm_mode;
    row.order_mode = opts.order_mode;
    row.needle_offset = needle_offset;
    row.seed = opts.common.seed;
    row.prefill_ops = result.prefill_ops;
    row.generation_ops = result.generation_ops;
    row.cache_len = result.cache_len_at_generation;
    row.cache_bytes = result.cache_bytes_at_generation;
    row.prefill_ms = result.prefill_ms;
    row.generation_ms = result.generation_ms;
    if (!answer.empty()) {
        const AnswerDistance d = answer_distance(result.output_tokens, answer);
        row.exact_match = d.exact_match;
        row.token_f1 = d.token_f1;
        std::printf("answer distance: em=%d f1=%.4f\n", d.exact_match, d.token_f1);
    }
    if (have_corpus) {
        row.needle_retention = needle_retention(cache, corpus);
        std::printf("needle retention: %.3f\n", row.needle_retention);
    }
    if (!opts.csv_out.empty()) {
        ExperimentReport report;
        report.rows.push_back(row);
        write_report_csv(report, opts.csv_out);
        std::printf("report written to %s\n", opts.csv_out.c_str());
    }
    if (opts.trace) {
        write_trace_csv(trace, opts.trace_out);
        std::printf("trace written to %s\n", opts.trace_out.c_str());
    }
    if (!opts.dump_cache_file.empty()) {
        dump_snapshot(cache, opts.dump_cache_file);
        std::printf("cache snapshot written to %s\n", opts.dump_cache_file.c_str());
    }
    return 0;
}

struct SweepOpts {
    CommonOpts common;
    std::vector<std::string> modes{"finch", "vanilla", "truncate"};
    std::vector<double> sigmas{2, 4, 8};
    std::vector<int> target_tokens;
    std::vector<int> chunk_sizes{64};
    std::vector<double> offsets{0.0, 0.25, 0.5, 0.75, 1.0};
    int seeds = 3;
    int n_cont = 256;
    int needle_len = 6;
    int distinct_ids = 1;
    int prompt_len = 16;
    int max_new_tokens = 8;
    std::string norm_mode = "column-mean";
    std::string order_mode = "ranking";
    std::string csv_out = "report.csv";
    bool no_timing = false;
};

int do_sweep(const SweepOpts &opts) {
    const Weights w = resolve_weights(opts.common);
    SweepGrid grid;
    grid.modes.clear();
    for (const std::string &m : opts.modes) grid.modes.push_back(mode_from_name(m));
    grid.sigmas = opts.sigmas;
    grid.target_tokens_list = opts.target_tokens;
    grid.chunk_sizes = opts.chunk_sizes;
    grid.offsets = opts.offsets;
    grid.seeds = opts.seeds;
    grid.base_seed = opts.common.seed;
    grid.n_cont = opts.n_cont;
    grid.needle_len = opts.needle_len;
    grid.needle_distinct_ids = opts.distinct_ids;
    grid.prompt_len = opts.prompt_len;
    grid.max_new_tokens = opts.max_new_tokens;
    grid.norm_mode = parse_norm(opts.norm_mode);
    grid.order_mode = parse_order(opts.order_mode);
    grid.include_timing = !opts.no_timing;

    const ExperimentReport report = run_sweep(w, grid);
    write_report_csv(report, opts.csv_out);
    std::printf("%zu rows written to %s\n", report.rows.size(), opts.csv_out.c_str());
    if (report.failed_cells > 0) {
        for (const ReportRow &row : report.rows)
            if (!row.error.empty())
                std::fprintf(stderr, "cell %s k=%d m=%d offset=%g seed=%llu failed: %s\n",
                             row.mode.c_str(), row.target_tokens, row.chunk_size, row.needle_offset,
                             static_cast<unsigned long long>(row.seed), row.error.c_str());
        std::fprintf(stderr, "%d cell(s) failed\n", report.failed_cells);
        return 1;
    }
    return 0;
}

struct NeedleOpts {
    CommonOpts common;
    int n_cont = 256;
    int needle_len = 6;
    double offset = 0.5;
    int distinct_ids = 1;
    int prompt_len = 16;
    std::string doc_out = "needle_doc.tokens";
    std::string prompt_out = "needle_prompt.tokens";
    std::string answer_out = "needle_answer.tokens";
};

int do_needle(const NeedleOpts &opts) {
    const NeedleCorpus corpus =
        make_needle_corpus({opts.n_cont, opts.needle_len, opts.offset, opts.common.seed,
                            opts.distinct_ids, opts.prompt_len},
                           opts.common.model);
    const std::vector<std::vector<int>> doc{corpus.doc};
    const std::vector<std::vector<int>> prompt{corpus.prompt};
    const std::vector<std::vector<int>> answer{corpus.answer};
    save_token_lines(opts.doc_out, doc);
    save_token_lines(opts.prompt_out, prompt);
    save_token_lines(opts.answer_out, answer);
    std::printf("needle at document offsets [%d, %d); files: %s %s %s\n", corpus.needle_begin,
                corpus.needle_begin + corpus.needle_len, opts.doc_out.c_str(),
                opts.prompt_out.c_str(), opts.answer_out.c_str());
    return 0;
}

struct OracleOpts {
    CommonOpts common;
    int instances = 1000;
};

int do_oracle_check(const OracleOpts &opts) {
    int comparisons = 0;
    for (std::uint64_t inst = 0; comparisons < opts.instances; ++inst) {
        Rng rng(inst * 613 + opts.common.seed);
        ModelConfig mc;
        mc.layers = 1 + static_cast<int>(rng.next_below(3));
        mc.heads = 1 + static_cast<int>(rng.next_below(3));
        mc.d_model = 8 * mc.heads;
        mc.vocab = 32;
        mc.n_max = 96;
        const Weights w = build_model(mc, inst);

        const int m = 3 + static_cast<int>(rng.next_below(14));
        const int n_que = 1 + static_cast<int>(rng.next_below(4));
        std::vector<int> doc((1 + rng.next_below(3)) * m);
        for (int &t : doc) t = static_cast<int>(rng.next_below(mc.vocab));
        std::vector<int> prompt(n_que);
        for (int &t : prompt) t = static_cast<int>(rng.next_below(mc.vocab));

        CompressionConfig cfg;
        cfg.sigma = 1.0 + rng.next_unit() * 3.0;
        cfg.chunk_size = m;
        cfg.norm_mode = static_cast<NormMode>(rng.next_below(3));

        const auto chunks = segment_document(doc, cfg, mc.n_max, n_que, 0);
        PrefillState state =
            init_prefill_state(cfg, static_cast<int>(doc.size()), static_cast<int>(chunks.size()));
        KvCache cache(mc.layers, mc.d_model, mc.d_head(), mc.n_max);
        for (const Chunk &chunk : chunks) {
            const int r = r_schedule(state, static_cast<int>(chunk.tokens.size()), state.sigma,
                                     state.target_tokens);
            const SelectionResult expected =
                oracle_selection(w, cache, chunk.tokens, prompt, r, cfg.norm_mode);
            const CompressStepResult step = compress_step(w, cache, chunk, prompt, state, cfg);
            if (step.selection.per_layer != expected.per_layer) {
                std::fprintf(stderr, "oracle mismatch on instance %llu\n",
                             static_cast<unsigned long long>(inst));
                return 1;
            }
            ++comparisons;
        }
    }
    std::printf("oracle agreed on %d randomized selections\n", comparisons);
    return 0;
}

struct HeatmapOpts {
    RunOpts run;
    int layer = 0;
    std::string csv_out = "heatmap.csv";
};

int do_heatmap(const HeatmapOpts &opts) {
    const Weights w = resolve_weights(opts.run.common);
    std::vector<int> doc, prompt;
    if (!opts.run.doc_file.empty()) {
        doc = first_doc(opts.run.doc_file);
        if (opts.run.prompt_file.empty()) throw ParameterError("--doc requires --prompt");
        prompt = first_doc(opts.run.prompt_file);
    } else {
        const NeedleCorpus corpus =
            make_needle_corpus({opts.run.n_cont, opts.run.needle_len, opts.run.offset,
                                opts.run.common.seed, opts.run.distinct_ids, opts.run.prompt_len},
                               w.config);
        doc = corpus.doc;
        prompt = corpus.prompt;
    }

    RunConfig rc;
    rc.mode = Mode::Finch;
    rc.max_new_tokens = opts.run.max_new_tokens;
    rc.compression.target_tokens = opts.run.target_tokens;
    rc.compression.sigma = opts.run.sigma;
    if (opts.run.target_tokens == 0 && opts.run.sigma == 0.0) rc.compression.sigma = 4.0;
    rc.compression.chunk_size = opts.run.chunk_size;
    rc.compression.norm_mode = parse_norm(opts.run.norm_mode);
    rc.compression.order_mode = parse_order(opts.run.order_mode);

    Trace trace;
    run_experiment(w, doc, prompt, rc, &trace);
    emit_heatmap(trace, opts.layer, opts.csv_out);
    std::printf("heatmap for layer %d (%d iterations) written to %s\n", opts.layer, trace.iterations,
                opts.csv_out.c_str());
    return 0;
}

void add_compression_flags(CLI::App *cmd, RunOpts &opts, bool with_mode) {
    if (with_mode)
        cmd->add_option("--mode", opts.mode, "finch | vanilla | truncate")
            ->check(CLI::IsMember({"finch", "vanilla", "truncate"}));
    auto *k = cmd->add_option("--target-tokens", opts.target_tokens, "Compressed cache size k");
    auto *s = cmd->add_option("--sigma", opts.sigma, "Compression ratio sigma");
    k->excludes(s);
    s->excludes(k);
    cmd->add_option("--chunk-size", opts.chunk_size, "Chunk size m (0 = largest that fits)");
    cmd->add_option("--norm-mode", opts.norm_mode, "column-mean | literal | none")
        ->check(CLI::IsMember({"column-mean", "literal", "none"}));
    cmd->add_option("--order-mode", opts.order_mode, "ranking | positional")
        ->check(CLI::IsMember({"ranking", "positional"}));
    cmd->add_option("--max-new-tokens", opts.max_new_tokens, "Generation budget a");
    cmd->add_option("--doc", opts.doc_file, "Token file, first line is the document");
    cmd->add_option("--prompt", opts.prompt_file, "Token file, first line is the prompt");
    cmd->add_option("--n-cont", opts.n_cont, "Synthetic corpus length (no --doc)");
    cmd->add_option("--needle-len", opts.needle_len, "Synthetic needle length");
    cmd->add_option("--offset", opts.offset, "Synthetic needle offset in [0,1]");
    cmd->add_option("--distinct-ids", opts.distinct_ids, "Distinct rare ids in the needle");
    cmd->add_option("--prompt-len", opts.prompt_len, "Synthetic prompt length");
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"finch: prompt-guided KV-cache compression engine"};
    app.require_subcommand(1);

    RunOpts run_opts;
    CLI::App *run_cmd = app.add_subcommand("run", "Run one experiment");
    add_model_flags(run_cmd, run_opts.common);
    add_compression_flags(run_cmd, run_opts, true);
    run_cmd->add_option("--answer", run_opts.answer_file, "Reference answer token file");
    run_cmd->add_option("--csv-out", run_opts.csv_out, "Write a one-row report CSV");
    run_cmd->add_flag("--trace", run_opts.trace, "Capture per-step selection trace");
    run_cmd->add_option("--trace-out", run_opts.trace_out, "Trace CSV path");
    run_cmd->add_option("--dump-cache", run_opts.dump_cache_file, "Binary cache snapshot path");

    SweepOpts sweep_opts;
    CLI::App *sweep_cmd = app.add_subcommand("sweep", "Run a parameter grid");
    add_model_flags(sweep_cmd, sweep_opts.common);
    sweep_cmd->add_option("--modes", sweep_opts.modes, "Modes to sweep");
    auto *gk = sweep_cmd->add_option("--target-tokens", sweep_opts.target_tokens, "k values");
    auto *gs = sweep_cmd->add_option("--sigma", sweep_opts.sigmas, "sigma values");
    gk->excludes(gs);
    gs->excludes(gk);
    sweep_cmd->add_option("--chunk-size", sweep_opts.chunk_sizes, "chunk sizes (finch cells)");
    sweep_cmd->add_option("--offsets", sweep_opts.offsets, "needle offsets");
    sweep_cmd->add_option("--seeds", sweep_opts.seeds, "seeds per cell");
    sweep_cmd->add_option("--n-cont", sweep_opts.n_cont, "document length");
    sweep_cmd->add_option("--needle-len", sweep_opts.needle_len, "needle length");
    sweep_cmd->add_option("--distinct-ids", sweep_opts.distinct_ids, "distinct rare ids");
    sweep_cmd->add_option("--prompt-len", sweep_opts.prompt_len, "prompt length");
    sweep_cmd->add_option("--max-new-tokens", sweep_opts.max_new_tokens, "generation budget");
    sweep_cmd->add_option("--norm-mode", sweep_opts.norm_mode, "column-mean | literal | none");
    sweep_cmd->add_option("--order-mode", sweep_opts.order_mode, "ranking | positional");
    sweep_cmd->add_option("--csv-out", sweep_opts.csv_out, "Report CSV path");
    sweep_cmd->add_flag("--no-timing", sweep_opts.no_timing, "Omit wall-time columns (diffable CSV)");

    NeedleOpts needle_opts;
    CLI::App *needle_cmd = app.add_subcommand("needle", "Generate a needle corpus");
    add_model_flags(needle_cmd, needle_opts.common);
    needle_cmd->add_option("--n-cont", needle_opts.n_cont, "document length");
    needle_cmd->add_option("--needle-len", needle_opts.needle_len, "needle length");
    needle_cmd->add_option("--offset", needle_opts.offset, "needle offset in [0,1]");
    needle_cmd->add_option("--distinct-ids", needle_opts.distinct_ids, "distinct rare ids");
    needle_cmd->add_option("--prompt-len", needle_opts.prompt_len, "prompt length");
    needle_cmd->add_option("--doc-out", needle_opts.doc_out, "document token file");
    needle_cmd->add_option("--prompt-out", needle_opts.prompt_out, "prompt token file");
    needle_cmd->add_option("--answer-out", needle_opts.answer_out, "answer token file");

    OracleOpts oracle_opts;
    CLI::App *oracle_cmd = app.add_subcommand("oracle-check", "Cross-check selections");
    add_model_flags(oracle_cmd, oracle_opts.common);
    oracle_cmd->add_option("--instances", oracle_opts.instances, "number of selections to compare");

    HeatmapOpts heatmap_opts;
    CLI::App *heatmap_cmd = app.add_subcommand("heatmap", "Dump prompt-attention heatmap data");
    add_model_flags(heatmap_cmd, heatmap_opts.run.common);
    add_compression_flags(heatmap_cmd, heatmap_opts.run, false);
    heatmap_cmd->add_option("--layer", heatmap_opts.layer, "layer to dump");
    heatmap_cmd->add_option("--csv-out", heatmap_opts.csv_out, "heatmap CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return do_run(run_opts);
        if (sweep_cmd->parsed()) return do_sweep(sweep_opts);
        if (needle_cmd->parsed()) return do_needle(needle_opts);
        if (oracle_cmd->parsed()) return do_oracle_check(oracle_opts);
        if (heatmap_cmd->parsed()) return do_heatmap(heatmap_opts);
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
