// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "finch/corpus.hpp"
#include "finch/pipeline.hpp"

namespace finch {

inline constexpr const char *kReportSchema = "finch.report.v1";

/// One completed experiment cell.
struct ReportRow {
    std::string mode;
    int target_tokens = 0;
    double sigma = 0.0;
    int chunk_size = 0;
    std::string norm_mode;
    std::string order_mode;
    double needle_offset = 0.0;
    std::uint64_t seed = 0;
    int exact_match = 0;
    double token_f1 = 0.0;
    double needle_retention = 0.0;
    int prefill_ops = 0;
    int generation_ops = 0;
    int cache_len = 0;
    long long cache_bytes = 0;
    double prefill_ms = 0.0;
    double generation_ms = 0.0;
    std::string error; // empty on success
};

struct ExperimentReport {
    std::vector<ReportRow> rows;
    int failed_cells = 0;
};

/// Parameter grid swept over seeded needle corpora. Cells run in an OpenMP
/// worker pool over the shared immutable weights; rows are sorted by cell key
/// before writing, so assembly order does not matter.
struct SweepGrid {
    std::vector<Mode> modes{Mode::Finch, Mode::Vanilla, Mode::Truncate};
    std::vector<double> sigmas{2, 4, 8};  // used when target_tokens_list is empty
    std::vector<int> target_tokens_list;
    std::vector<int> chunk_sizes{64};
    std::vector<double> offsets{0.0, 0.25, 0.5, 0.75, 1.0};
    int seeds = 1;
    std::uint64_t base_seed = 1;
    int n_cont = 256;
    int needle_len = 6;
    int needle_distinct_ids = 1;
    int prompt_len = 16;
    int max_new_tokens = 8;
    NormMode norm_mode = NormMode::ColumnMean;
    OrderMode order_mode = OrderMode::Ranking;
    bool include_timing = true; // timing columns are not byte-stable; drop for diffable output
};

ExperimentReport run_sweep(const Weights &weights, const SweepGrid &grid);

/// RFC-4180 CSV with a header row. Deterministic formatting; byte-stable
/// across reruns when timing columns are disabled.
void write_report_csv(const ExperimentReport &report, std::ostream &out);
void write_report_csv(const ExperimentReport &report, const std::string &path);

/// Selection dump of a captured trace:
/// iteration,layer,rank,column,score,cache_len,chunk_len per selected column.
void write_trace_csv(const Trace &trace, const std::string &path);

/// Prompt-attention heatmap data for one layer, long form:
/// iteration,row,col,value with col spanning the [cache, chunk] columns of
/// that iteration. Missing trace or layer is a ParameterError.
void emit_heatmap(const Trace &trace, int layer, const std::string &path);

} // namespace finch
