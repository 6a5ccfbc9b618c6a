// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include <omp.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "finch/corpus.hpp"
#include "finch/oracle.hpp"
#include "finch/pipeline.hpp"
#include "finch/sweep.hpp"

using namespace finch;

namespace {

ModelConfig probe_config() {
    ModelConfig cfg;
    cfg.layers = 4;
    cfg.heads = 2;
    cfg.d_model = 64;
    cfg.vocab = 256;
    cfg.n_max = 512;
    return cfg;
}

std::string slurp(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_SUITE("harness") {

TEST_CASE("needle corpus placement and reproducibility") {
    const ModelConfig mc = probe_config();

    const NeedleCorpus at_start = make_needle_corpus({256, 6, 0.0, 7, 1, 16}, mc);
    CHECK(at_start.needle_begin == 0);
    const NeedleCorpus at_mid = make_needle_corpus({256, 6, 0.5, 7, 1, 16}, mc);
    CHECK(at_mid.needle_begin == 125);
    const NeedleCorpus at_end = make_needle_corpus({256, 6, 1.0, 7, 1, 16}, mc);
    CHECK(at_end.needle_begin == 250);

    const NeedleCorpus again = make_needle_corpus({256, 6, 0.5, 7, 1, 16}, mc);
    CHECK(again.doc == at_mid.doc);
    CHECK(again.prompt == at_mid.prompt);

    // the needle ids are rare: they appear nowhere else in the document
    std::set<int> needle_ids(at_mid.answer.begin(), at_mid.answer.end());
    for (int i = 0; i < 256; ++i) {
        const bool inside = i >= at_mid.needle_begin && i < at_mid.needle_begin + 6;
        if (!inside) CHECK(needle_ids.count(at_mid.doc[i]) == 0);
    }
    // prompt shares exactly the needle ids
    for (int t : at_mid.prompt) CHECK(needle_ids.count(t) == 1);

    CHECK_THROWS_AS(make_needle_corpus({8, 9, 0.5, 1, 1, 0}, mc), ParameterError);
    CHECK_THROWS_AS(make_needle_corpus({256, 6, 1.5, 1, 1, 0}, mc), ParameterError);
}

TEST_CASE("truncate retention is structural") {
    const ModelConfig mc = probe_config();
    for (double offset : {0.25, 0.5, 0.75}) {
        const NeedleCorpus corpus = make_needle_corpus({256, 6, offset, 3, 1, 16}, mc);
        CHECK(truncate_retention(corpus, 64) == 0.0);
    }
    const NeedleCorpus head = make_needle_corpus({256, 6, 0.0, 3, 1, 16}, mc);
    CHECK(truncate_retention(head, 64) == 1.0);
}

TEST_CASE("oracle reproduces the compressor selection across modes and seeds") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        Rng rng(seed * 977 + 13);
        ModelConfig mc;
        mc.layers = 1 + static_cast<int>(rng.next_below(3));
        mc.heads = 1 + static_cast<int>(rng.next_below(2));
        mc.d_model = 8 * mc.heads * (1 + static_cast<int>(rng.next_below(2)));
        mc.vocab = 32;
        mc.n_max = 128;
        const Weights w = build_model(mc, seed);

        const int m = 4 + static_cast<int>(rng.next_below(12));
        const int n_que = 1 + static_cast<int>(rng.next_below(4));
        std::vector<int> doc(m * 2);
        for (int &t : doc) t = static_cast<int>(rng.next_below(mc.vocab));
        std::vector<int> prompt(n_que);
        for (int &t : prompt) t = static_cast<int>(rng.next_below(mc.vocab));

        for (NormMode mode : {NormMode::ColumnMean, NormMode::Literal, NormMode::None}) {
            CompressionConfig cfg;
            cfg.sigma = 2.0;
            cfg.chunk_size = m;
            cfg.norm_mode = mode;
            const auto chunks = segment_document(doc, cfg, mc.n_max, n_que, 0);
            PrefillState state = init_prefill_state(cfg, static_cast<int>(doc.size()),
                                                    static_cast<int>(chunks.size()));
            KvCache cache(mc.layers, mc.d_model, mc.d_head(), mc.n_max);
            for (const Chunk &chunk : chunks) {
                const int r = r_schedule(state, static_cast<int>(chunk.tokens.size()), state.sigma,
                                         state.target_tokens);
                const SelectionResult expected =
                    oracle_selection(w, cache, chunk.tokens, prompt, r, mode);
                const CompressStepResult step = compress_step(w, cache, chunk, prompt, state, cfg);
                CHECK(step.selection.per_layer == expected.per_layer);
            }
        }
    }
}

TEST_CASE("oracle tie-break keeps the lowest indices on uniform scores") {
    LayerScores uniform;
    uniform.heads = 1;
    uniform.rows = 5; // m=4 chunk rows + 1 prompt row
    uniform.cols = 5;
    uniform.data.assign(25, 0.2);
    ScoreTensor scores{uniform};
    const SelectionResult sel = oracle_select_from_scores(scores, 4, 1, 0, 3, NormMode::None);
    CHECK(sel.per_layer[0] == std::vector<int>{0, 1, 2});
}

TEST_CASE("finch retains a middle needle that truncation drops") {
    const ModelConfig mc = probe_config();
    const Weights w = build_model(mc, 2026);
    int finch_ge_trunc = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const NeedleCorpus corpus = make_needle_corpus({256, 6, 0.5, seed, 1, 16}, mc);
        RunConfig rc;
        rc.compression.sigma = 4.0;
        rc.compression.chunk_size = 32;
        rc.max_new_tokens = 6;

        rc.mode = Mode::Finch;
        KvCache finch_cache;
        const RunResult finch_run = run_experiment(w, corpus.doc, corpus.prompt, rc, nullptr, &finch_cache);
        CHECK(needle_retention(finch_cache, corpus) >= 0.9);

        rc.mode = Mode::Truncate;
        KvCache trunc_cache;
        const RunResult trunc_run = run_experiment(w, corpus.doc, corpus.prompt, rc, nullptr, &trunc_cache);
        CHECK(needle_retention(trunc_cache, corpus) == 0.0);

        const double ff1 = answer_distance(finch_run.output_tokens, corpus.answer).token_f1;
        const double tf1 = answer_distance(trunc_run.output_tokens, corpus.answer).token_f1;
        finch_ge_trunc += ff1 >= tf1;
    }
    CHECK(finch_ge_trunc == 5); // budget-matched F1 never favors truncation here
}

TEST_CASE("sweep emits one row per cell with the memory law") {
    const ModelConfig mc = probe_config();
    const Weights w = build_model(mc, 31);

    SweepGrid grid;
    grid.modes = {Mode::Vanilla, Mode::Finch};
    grid.sigmas = {2, 4, 8};
    grid.chunk_sizes = {64};
    grid.offsets = {0.0, 0.5};
    grid.seeds = 1;
    grid.n_cont = 256;
    grid.needle_len = 6;
    grid.include_timing = false;

    const ExperimentReport report = run_sweep(w, grid);
    CHECK(report.failed_cells == 0);
    CHECK(report.rows.size() == 8); // (1 vanilla + 3 finch) x 2 offsets

    long long vanilla_doc_bytes = 0;
    for (const ReportRow &row : report.rows)
        if (row.mode == "vanilla") {
            // document share of the vanilla cache
            vanilla_doc_bytes = 2LL * mc.layers * grid.n_cont * mc.d_model * 4;
            CHECK(row.cache_len == grid.n_cont + grid.prompt_len); // doc + prompt rows
            CHECK(row.prefill_ops == 1);
        }
    for (const ReportRow &row : report.rows)
        if (row.mode == "finch") {
            CHECK(row.cache_bytes * static_cast<long long>(row.sigma) == vanilla_doc_bytes);
            CHECK(row.prefill_ops == 4); // 256 / 64
        }
}

TEST_CASE("sweep chunk sizes drive the sequential op count") {
    ModelConfig mc = probe_config();
    mc.n_max = 2048; // vanilla needs headroom at n_cont = 1024
    const Weights w = build_model(mc, 32);

    SweepGrid grid;
    grid.modes = {Mode::Finch};
    grid.sigmas = {4};
    grid.chunk_sizes = {64, 128, 256};
    grid.offsets = {0.5};
    grid.seeds = 1;
    grid.n_cont = 1024;
    grid.needle_len = 6;
    grid.include_timing = false;

    const ExperimentReport report = run_sweep(w, grid);
    CHECK(report.failed_cells == 0);
    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].prefill_ops == 16);
    CHECK(report.rows[1].prefill_ops == 8);
    CHECK(report.rows[2].prefill_ops == 4);
}

TEST_CASE("report CSV is byte-stable across reruns") {
    const ModelConfig mc = probe_config();
    const Weights w = build_model(mc, 33);

    SweepGrid grid;
    grid.modes = {Mode::Finch, Mode::Truncate};
    grid.sigmas = {4};
    grid.chunk_sizes = {32};
    grid.offsets = {0.5};
    grid.seeds = 2;
    grid.n_cont = 128;
    grid.needle_len = 6;
    grid.include_timing = false; // timing columns are the one unstable part

    write_report_csv(run_sweep(w, grid), "sweep_a.csv");
    write_report_csv(run_sweep(w, grid), "sweep_b.csv");
    const std::string a = slurp("sweep_a.csv");
    CHECK(a == slurp("sweep_b.csv"));
    CHECK(a.find("schema,mode,") == 0);
    CHECK(a.find(kReportSchema) != std::string::npos);
    std::remove("sweep_a.csv");
    std::remove("sweep_b.csv");
}

TEST_CASE("heatmap matrices track the growing cache") {
    const ModelConfig mc = probe_config();
    const Weights w = build_model(mc, 34);
    Rng rng(9);
    std::vector<int> doc(96);
    for (int &t : doc) t = 2 + static_cast<int>(rng.next_below(mc.vocab - 18));
    std::vector<int> prompt(4);
    for (int &t : prompt) t = 2 + static_cast<int>(rng.next_below(mc.vocab - 18));

    CompressionConfig cfg;
    cfg.sigma = 4.0;
    cfg.chunk_size = 32;
    Trace trace;
    prefill_finch(w, doc, prompt, cfg, 4, &trace);
    CHECK(trace.iterations == 3);

    emit_heatmap(trace, 0, "heat.csv");
    // parse back: per iteration the column count is m + c = 32, 40, 48
    std::ifstream in("heat.csv");
    std::string line;
    std::getline(in, line); // header
    std::vector<int> max_col(3, -1);
    std::vector<int> max_row(3, -1);
    double max_value = 0.0;
    while (std::getline(in, line)) {
        int it, row, col;
        double value;
        REQUIRE(std::sscanf(line.c_str(), "%d,%d,%d,%lf", &it, &row, &col, &value) == 4);
        max_col[it] = std::max(max_col[it], col);
        max_row[it] = std::max(max_row[it], row);
        max_value = std::max(max_value, value);
        CHECK(value >= 0.0);
    }
    CHECK(max_col == std::vector<int>{31, 39, 47});
    CHECK(max_row == std::vector<int>{3, 3, 3});         // n_que rows
    CHECK(max_value <= mc.heads);                        // head-summed probabilities
    std::remove("heat.csv");

    CHECK_THROWS_AS(emit_heatmap(trace, 99, "nope.csv"), ParameterError);

    write_trace_csv(trace, "trace.csv");
    const std::string t = slurp("trace.csv");
    CHECK(t.find("iteration,layer,rank,column,score") == 0);
    std::remove("trace.csv");
}

TEST_CASE("token files round-trip and reject junk") {
    const std::vector<std::vector<int>> docs{{1, 2, 3, 250}, {7}, {0, 8, 9}};
    save_token_lines("docs.tokens", docs);
    CHECK(load_token_lines("docs.tokens") == docs);

    std::ofstream bad("bad.tokens");
    bad << "1 2 x 4\n";
    bad.close();
    CHECK_THROWS_AS(load_token_lines("bad.tokens"), FormatError);
    CHECK_THROWS_AS(load_token_lines("missing.tokens"), FormatError);
    std::remove("docs.tokens");
    std::remove("bad.tokens");
}

TEST_CASE("sweep results are identical for any thread count") {
    const ModelConfig mc = probe_config();
    const Weights w = build_model(mc, 36);
    SweepGrid grid;
    grid.modes = {Mode::Finch, Mode::Truncate};
    grid.sigmas = {4};
    grid.chunk_sizes = {32};
    grid.offsets = {0.25, 0.75};
    grid.seeds = 2;
    grid.n_cont = 128;
    grid.include_timing = false;

    const int previous = omp_get_max_threads();
    omp_set_num_threads(1);
    std::ostringstream serial;
    write_report_csv(run_sweep(w, grid), serial);
    omp_set_num_threads(std::max(2, previous));
    std::ostringstream parallel;
    write_report_csv(run_sweep(w, grid), parallel);
    omp_set_num_threads(previous);
    CHECK(serial.str() == parallel.str());
}

TEST_CASE("single-chunk heatmap is one n_que x m matrix") {
    const ModelConfig mc = probe_config();
    const Weights w = build_model(mc, 35);
    std::vector<int> doc(32, 5);
    const std::vector<int> prompt{9, 10};

    CompressionConfig cfg;
    cfg.sigma = 2.0;
    cfg.chunk_size = 32;
    Trace trace;
    prefill_finch(w, doc, prompt, cfg, 2, &trace);
    CHECK(trace.iterations == 1);
    REQUIRE(trace.steps.size() == static_cast<size_t>(mc.layers));
    CHECK(trace.steps[0].prompt_attention.rows == 2);
    CHECK(trace.steps[0].prompt_attention.cols == 32);
}

} // TEST_SUITE
