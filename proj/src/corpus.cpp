// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include "finch/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

namespace finch {

namespace {

constexpr int kRareRange = 16;   // top-of-vocabulary ids reserved for needles
constexpr int kFillerFloor = 2;  // keeps 0 (eos) and 1 out of the filler
constexpr double kZipfExponent = 1.1;

} // namespace

NeedleCorpus make_needle_corpus(const NeedleSpec &spec, const ModelConfig &config) {
    if (spec.offset < 0.0 || spec.offset > 1.0)
        throw ParameterError("make_needle_corpus: offset must lie in [0, 1]");
    if (spec.needle_len < 1 || spec.needle_len > spec.n_cont)
        throw ParameterError("make_needle_corpus: needle does not fit the document");
    const int distinct = std::min(spec.distinct_ids < 1 ? 1 : spec.distinct_ids, spec.needle_len);
    if (distinct > kRareRange)
        throw ParameterError("make_needle_corpus: more distinct ids than the reserved rare range");
    const int filler_hi = config.vocab - kRareRange;
    if (filler_hi - kFillerFloor < 8)
        throw ParameterError("make_needle_corpus: vocabulary too small for filler + rare split");

    Rng rng(spec.seed);

    // Zipf-like filler distribution over [kFillerFloor, filler_hi); the rare
    // ids never appear as filler, so the needle pattern is unique in the
    // document.
    const int filler_n = filler_hi - kFillerFloor;
    std::vector<double> cdf(filler_n);
    double total = 0.0;
    for (int i = 0; i < filler_n; ++i) {
        total += 1.0 / std::pow(static_cast<double>(i + 1), kZipfExponent);
        cdf[i] = total;
    }
    auto draw_filler = [&]() {
        const double u = rng.next_unit() * total;
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        return kFillerFloor + static_cast<int>(it - cdf.begin());
    };

    // Distinct rare ids, cycled into the needle pattern.
    std::vector<int> rare(kRareRange);
    std::iota(rare.begin(), rare.end(), filler_hi);
    for (int i = kRareRange - 1; i > 0; --i)
        std::swap(rare[i], rare[static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1))]);
    rare.resize(distinct);

    NeedleCorpus corpus;
    corpus.needle_len = spec.needle_len;
    corpus.needle_begin =
        static_cast<int>(std::llround(spec.offset * (spec.n_cont - spec.needle_len)));
    corpus.doc.resize(spec.n_cont);
    for (int i = 0; i < spec.n_cont; ++i) corpus.doc[i] = draw_filler();
    for (int i = 0; i < spec.needle_len; ++i)
        corpus.doc[corpus.needle_begin + i] = rare[i % distinct];
    const int prompt_len = spec.prompt_len > 0 ? spec.prompt_len : spec.needle_len;
    corpus.prompt.resize(prompt_len);
    for (int i = 0; i < prompt_len; ++i) corpus.prompt[i] = rare[i % distinct];
    corpus.answer.resize(spec.needle_len);
    for (int i = 0; i < spec.needle_len; ++i) corpus.answer[i] = rare[i % distinct];
    return corpus;
}

double needle_retention(const KvCache &cache, const NeedleCorpus &corpus) {
    if (corpus.needle_len == 0) return 0.0;
    std::set<long long> retained;
    for (int l = 0; l < cache.layer_count(); ++l)
        for (long long p : cache.provenance(l))
            if (p >= 0) retained.insert(p);
    int hit = 0;
    for (int i = 0; i < corpus.needle_len; ++i)
        hit += retained.count(static_cast<long long>(corpus.needle_begin) + i) > 0;
    return static_cast<double>(hit) / corpus.needle_len;
}

double truncate_retention(const NeedleCorpus &corpus, int target_tokens) {
    const int n_cont = static_cast<int>(corpus.doc.size());
    const int head = target_tokens >= n_cont ? n_cont : (target_tokens + 1) / 2;
    const int tail_begin = target_tokens >= n_cont ? 0 : n_cont - target_tokens / 2;
    int hit = 0;
    for (int i = 0; i < corpus.needle_len; ++i) {
        const int off = corpus.needle_begin + i;
        hit += off < head || off >= tail_begin;
    }
    return static_cast<double>(hit) / corpus.needle_len;
}

std::vector<std::vector<int>> load_token_lines(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw FormatError("load_token_lines: cannot open " + path);
    std::vector<std::vector<int>> docs;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::vector<int> tokens;
        long long t;
        while (ss >> t) tokens.push_back(static_cast<int>(t));
        if (!ss.eof()) throw FormatError("load_token_lines: non-integer token in " + path);
        if (!tokens.empty()) docs.push_back(std::move(tokens));
    }
    return docs;
}

void save_token_lines(const std::string &path, std::span<const std::vector<int>> docs) {
    std::ofstream out(path);
    if (!out) throw FormatError("save_token_lines: cannot open " + path);
    for (const auto &doc : docs) {
        for (size_t i = 0; i < doc.size(); ++i) {
            if (i) out << ' ';
            out << doc[i];
        }
        out << '\n';
    }
    if (!out) throw FormatError("save_token_lines: write failed for " + path);
}

} // namespace finch
