// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include "finch/sweep.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

namespace finch {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v); // shortest round-trip form
    return std::string(buf, res.ptr);
}

std::string fmt_ms(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::string csv_escape(const std::string &s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

const char *norm_mode_name(NormMode mode) {
    switch (mode) {
        case NormMode::ColumnMean: return "column-mean";
        case NormMode::Literal: return "literal";
        case NormMode::None: return "none";
    }
    return "?";
}

const char *order_mode_name(OrderMode mode) {
    switch (mode) {
        case OrderMode::Ranking: return "ranking";
        case OrderMode::Positional: return "positional";
    }
    return "?";
}

struct Cell {
    Mode mode;
    double sigma = 0.0;  // 0 when target tokens drive the cell
    int target_tokens = 0;
    int chunk_size = 0;
    double offset = 0.0;
    std::uint64_t seed = 0;
};

ReportRow run_cell(const Weights &weights, const SweepGrid &grid, const Cell &cell) {
    ReportRow row;
    row.mode = mode_name(cell.mode);
    row.chunk_size = cell.chunk_size;
    row.needle_offset = cell.offset;
    row.seed = cell.seed;
    row.norm_mode = norm_mode_name(grid.norm_mode);
    row.order_mode = order_mode_name(grid.order_mode);
    try {
        const NeedleCorpus corpus = make_needle_corpus(
            {grid.n_cont, grid.needle_len, cell.offset, cell.seed, grid.needle_distinct_ids,
             grid.prompt_len},
            weights.config);

        RunConfig config;
        config.mode = cell.mode;
        config.max_new_tokens = grid.max_new_tokens;
        config.seed = cell.seed;
        config.compression.norm_mode = grid.norm_mode;
        config.compression.order_mode = grid.order_mode;
        if (cell.mode != Mode::Vanilla) {
            config.compression.sigma = cell.sigma;
            config.compression.target_tokens = cell.target_tokens;
            config.compression.chunk_size = cell.mode == Mode::Finch ? cell.chunk_size : 0;
        } else {
            config.compression.sigma = 1.0;
        }

        KvCache cache(weights.config.layers, weights.config.d_model, weights.config.d_head(),
                      weights.config.n_max);
        const RunResult result =
            run_experiment(weights, corpus.doc, corpus.prompt, config, nullptr, &cache);

        const AnswerDistance dist = answer_distance(result.output_tokens, corpus.answer);
        row.target_tokens = result.target_tokens;
        row.sigma = result.sigma;
        row.exact_match = dist.exact_match;
        row.token_f1 = dist.token_f1;
        row.needle_retention = needle_retention(cache, corpus);
        row.prefill_ops = result.prefill_ops;
        row.generation_ops = result.generation_ops;
        row.cache_len = result.cache_len_at_generation;
        row.cache_bytes = result.cache_bytes_at_generation;
        row.prefill_ms = result.prefill_ms;
        row.generation_ms = result.generation_ms;
    } catch (const std::exception &e) {
        row.error = e.what();
    }
    return row;
}

} // namespace

ExperimentReport run_sweep(const Weights &weights, const SweepGrid &grid) {
    std::vector<Cell> cells;
    const bool use_targets = !grid.target_tokens_list.empty();
    const size_t budgets = use_targets ? grid.target_tokens_list.size() : grid.sigmas.size();

    for (double offset : grid.offsets) {
        for (int s = 0; s < grid.seeds; ++s) {
            const std::uint64_t seed = grid.base_seed + static_cast<std::uint64_t>(s);
            for (Mode mode : grid.modes) {
                if (mode == Mode::Vanilla) {
                    cells.push_back({mode, 0.0, 0, 0, offset, seed});
                    continue;
                }
                for (size_t b = 0; b < budgets; ++b) {
                    const double sigma = use_targets ? 0.0 : grid.sigmas[b];
                    const int k = use_targets ? grid.target_tokens_list[b] : 0;
                    if (mode == Mode::Truncate) {
                        cells.push_back({mode, sigma, k, 0, offset, seed});
                    } else {
                        for (int m : grid.chunk_sizes) cells.push_back({mode, sigma, k, m, offset, seed});
                    }
                }
            }
        }
    }

    ExperimentReport report;
    report.rows.resize(cells.size());
    // Worker pool over immutable weights; every cell writes its own slot.
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < cells.size(); ++i) report.rows[i] = run_cell(weights, grid, cells[i]);

    for (const ReportRow &row : report.rows) report.failed_cells += !row.error.empty();
    std::sort(report.rows.begin(), report.rows.end(), [](const ReportRow &a, const ReportRow &b) {
        return std::tie(a.mode, a.target_tokens, a.sigma, a.chunk_size, a.needle_offset, a.seed) <
               std::tie(b.mode, b.target_tokens, b.sigma, b.chunk_size, b.needle_offset, b.seed);
    });
    if (!grid.include_timing) {
        for (ReportRow &row : report.rows) row.prefill_ms = row.generation_ms = -1.0;
    }
    return report;
}

void write_report_csv(const ExperimentReport &report, std::ostream &out) {
    out << "schema,mode,target_tokens,sigma,chunk_size,norm_mode,order_mode,needle_offset,seed,"
           "exact_match,token_f1,needle_retention,prefill_ops,generation_ops,cache_len,cache_bytes,"
           "prefill_ms,generation_ms,error\r\n";
    for (const ReportRow &r : report.rows) {
        out << kReportSchema << ',' << r.mode << ',' << r.target_tokens << ',' << fmt_double(r.sigma)
            << ',' << r.chunk_size << ',' << r.norm_mode << ',' << r.order_mode << ','
            << fmt_double(r.needle_offset) << ',' << r.seed << ',' << r.exact_match << ','
            << fmt_double(r.token_f1) << ',' << fmt_double(r.needle_retention) << ',' << r.prefill_ops
            << ',' << r.generation_ops << ',' << r.cache_len << ',' << r.cache_bytes << ','
            << (r.prefill_ms < 0 ? "" : fmt_ms(r.prefill_ms)) << ','
            << (r.generation_ms < 0 ? "" : fmt_ms(r.generation_ms)) << ',' << csv_escape(r.error)
            << "\r\n";
    }
}

void write_report_csv(const ExperimentReport &report, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("write_report_csv: cannot open " + path);
    write_report_csv(report, out);
    if (!out) throw FormatError("write_report_csv: write failed for " + path);
}

void write_trace_csv(const Trace &trace, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("write_trace_csv: cannot open " + path);
    out << "iteration,layer,rank,column,score,cache_len,chunk_len\r\n";
    for (const TraceStep &step : trace.steps) {
        for (size_t rank = 0; rank < step.selected.size(); ++rank) {
            const int col = step.selected[rank];
            out << step.iteration << ',' << step.layer << ',' << rank << ',' << col << ','
                << fmt_double(step.aggregated[col]) << ',' << step.cache_len << ',' << step.chunk_len
                << "\r\n";
        }
    }
    if (!out) throw FormatError("write_trace_csv: write failed for " + path);
}

void emit_heatmap(const Trace &trace, int layer, const std::string &path) {
    bool found = false;
    for (const TraceStep &step : trace.steps) found |= step.layer == layer;
    if (!found) throw ParameterError("emit_heatmap: no trace rows for layer " + std::to_string(layer));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("emit_heatmap: cannot open " + path);
    out << "iteration,row,col,value\r\n";
    for (const TraceStep &step : trace.steps) {
        if (step.layer != layer) continue;
        const Matrix &attn = step.prompt_attention;
        for (int i = 0; i < attn.rows; ++i)
            for (int j = 0; j < attn.cols; ++j)
                out << step.iteration << ',' << i << ',' << j << ',' << fmt_double(attn.at(i, j))
                    << "\r\n";
    }
    if (!out) throw FormatError("emit_heatmap: write failed for " + path);
}

} // namespace finch
