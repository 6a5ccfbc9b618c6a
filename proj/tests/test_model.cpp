// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <numeric>

#include "doctest.h"
#include "finch/model.hpp"
#include "finch/rope.hpp"
#include "finch/weights_io.hpp"

using namespace finch;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.d_model = 16;
    cfg.vocab = 32;
    cfg.n_max = 64;
    return cfg;
}

std::vector<int> iota_positions(int n, int start = 0) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), start);
    return p;
}

KvCache empty_cache(const ModelConfig &cfg, bool shadows = false) {
    return KvCache(cfg.layers, cfg.d_model, cfg.d_head(), cfg.n_max, shadows);
}

} // namespace

TEST_SUITE("model") {

TEST_CASE("build_model is deterministic in (config, seed)") {
    const ModelConfig cfg = tiny_config();
    const Weights a = build_model(cfg, 123);
    const Weights b = build_model(cfg, 123);
    CHECK(a.embedding.data == b.embedding.data);
    CHECK(a.layers[1].wq.data == b.layers[1].wq.data);
    CHECK(a.unembed.data == b.unembed.data);

    const Weights c = build_model(cfg, 124);
    CHECK(a.layers[0].wq.data != c.layers[0].wq.data);
}

TEST_CASE("build_model shapes follow the config") {
    ModelConfig cfg;
    cfg.layers = 3;
    cfg.heads = 2;
    cfg.d_model = 8;
    cfg.vocab = 16;
    cfg.n_max = 32;
    const Weights w = build_model(cfg, 0);
    CHECK(cfg.d_head() == 4);
    CHECK(w.embedding.rows == 16);
    CHECK(w.embedding.cols == 8);
    REQUIRE(w.layers.size() == 3);
    for (const auto &layer : w.layers) {
        CHECK(layer.wq.rows == 8);
        CHECK(layer.wq.cols == 8);
        CHECK(layer.w1.cols == 16);
        CHECK(layer.w2.rows == 16);
    }
    CHECK(w.unembed.rows == 8);
    CHECK(w.unembed.cols == 16);
}

TEST_CASE("build_model rejects invalid configs") {
    ModelConfig bad = tiny_config();
    bad.d_model = 18; // not divisible by heads=2 into an even head
    CHECK_THROWS_AS(build_model(bad, 0), ParameterError);
    bad = tiny_config();
    bad.n_max = 4;
    CHECK_THROWS_AS(build_model(bad, 0), ParameterError);
}

TEST_CASE("rope position zero is the identity") {
    const std::vector<double> v{1.0, -2.0, 0.5, 3.0};
    CHECK(rope_rotate(v, 0) == v);
}

TEST_CASE("rope rotation inverts exactly enough") {
    Rng rng(9);
    std::vector<double> v(8);
    for (double &x : v) x = rng.next_gaussian();
    const auto there = rope_rotate(v, 37);
    const auto back = rope_rotate(there, -37);
    for (size_t i = 0; i < v.size(); ++i) CHECK(back[i] == doctest::Approx(v[i]).epsilon(1e-9));
}

TEST_CASE("rope preserves dot products under a common shift") {
    Rng rng(10);
    std::vector<double> q(8), k(8);
    for (double &x : q) x = rng.next_gaussian();
    for (double &x : k) x = rng.next_gaussian();
    auto dot = [](const std::vector<double> &a, const std::vector<double> &b) {
        double acc = 0.0;
        for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
        return acc;
    };
    const double base = dot(rope_rotate(q, 11), rope_rotate(k, 4));
    for (long long shift : {1LL, 17LL, 100LL, -3LL}) {
        const double shifted = dot(rope_rotate(q, 11 + shift), rope_rotate(k, 4 + shift));
        CHECK(shifted == doctest::Approx(base).epsilon(1e-6));
    }
}

TEST_CASE("rope rejects odd head widths") {
    CHECK_THROWS_AS(rope_rotate(std::vector<double>{1, 2, 3}, 1), ShapeError);
}

TEST_CASE("single-token window scores exactly one") {
    const ModelConfig cfg = tiny_config();
    const Weights w = build_model(cfg, 1);
    const KvCache cache = empty_cache(cfg);
    const int tokens[1] = {5};
    const int positions[1] = {0};
    const ForwardOutput out = forward_chunk(w, tokens, positions, cache);
    REQUIRE(out.scores.size() == 2);
    for (const LayerScores &s : out.scores) {
        CHECK(s.rows == 1);
        CHECK(s.cols == 1);
        for (int h = 0; h < s.heads; ++h) CHECK(s.at(h, 0, 0) == 1.0);
    }
}

TEST_CASE("causal window scores are lower-triangular with unit row sums") {
    const ModelConfig cfg = tiny_config();
    const Weights w = build_model(cfg, 2);
    const KvCache cache = empty_cache(cfg);
    const std::vector<int> tokens{1, 2, 3, 4};
    const ForwardOutput out = forward_chunk(w, tokens, iota_positions(4), cache);
    for (const LayerScores &s : out.scores) {
        for (int h = 0; h < s.heads; ++h) {
            for (int i = 0; i < s.rows; ++i) {
                double sum = 0.0;
                for (int j = 0; j < s.cols; ++j) {
                    const double p = s.at(h, i, j);
                    CHECK(p >= 0.0);
                    CHECK(p <= 1.0);
                    if (j > i) CHECK(p == 0.0); // later window columns are invisible
                    sum += p;
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("two-pass prefill reproduces one-shot logits") {
    const ModelConfig cfg = tiny_config();
    const Weights w = build_model(cfg, 3);
    Rng rng(30);
    std::vector<int> tokens(8);
    for (int &t : tokens) t = static_cast<int>(rng.next_below(cfg.vocab));

    const KvCache fresh = empty_cache(cfg);
    const ForwardOutput once = forward_chunk(w, tokens, iota_positions(8), fresh);

    for (int split : {1, 4, 7}) {
        KvCache cache = empty_cache(cfg);
        const std::vector<int> head(tokens.begin(), tokens.begin() + split);
        const ForwardOutput first = forward_chunk(w, head, iota_positions(split), cache);
        std::vector<long long> prov(split);
        std::iota(prov.begin(), prov.end(), 0LL);
        cache.append(first.fresh_k, first.fresh_v, iota_positions(split), prov);

        const std::vector<int> rest(tokens.begin() + split, tokens.end());
        const ForwardOutput second =
            forward_chunk(w, rest, iota_positions(8 - split, split), cache);

        const double *one_shot = once.logits.row(7);
        const double *two_pass = second.logits.row(7 - split);
        for (int j = 0; j < cfg.vocab; ++j)
            CHECK(two_pass[j] == doctest::Approx(one_shot[j]).epsilon(1e-6));
    }
}

TEST_CASE("forward_chunk is bit-deterministic") {
    const ModelConfig cfg = tiny_config();
    const Weights w = build_model(cfg, 4);
    const KvCache cache = empty_cache(cfg);
    const std::vector<int> tokens{7, 8, 9, 10, 11};
    const ForwardOutput a = forward_chunk(w, tokens, iota_positions(5), cache);
    const ForwardOutput b = forward_chunk(w, tokens, iota_positions(5), cache);
    CHECK(a.logits.data == b.logits.data);
    for (size_t l = 0; l < a.scores.size(); ++l) CHECK(a.scores[l].data == b.scores[l].data);
    for (size_t l = 0; l < a.fresh_k.size(); ++l) CHECK(a.fresh_k[l].data == b.fresh_k[l].data);
}

TEST_CASE("forward_chunk guards the context window and positions") {
    const ModelConfig cfg = tiny_config();
    const Weights w = build_model(cfg, 5);
    const KvCache cache = empty_cache(cfg);
    std::vector<int> too_long(cfg.n_max + 1, 1);
    CHECK_THROWS_AS(forward_chunk(w, too_long, iota_positions(cfg.n_max + 1), cache), CapacityError);

    const std::vector<int> tokens{1, 2};
    CHECK_THROWS_AS(forward_chunk(w, tokens, std::vector<int>{1, 1}, cache), ParameterError);
    CHECK_THROWS_AS(forward_chunk(w, std::vector<int>{1, cfg.vocab}, iota_positions(2), cache),
                    ParameterError);
}

TEST_CASE("weight file round-trips and validates its header") {
    const ModelConfig cfg = tiny_config();
    const Weights w = build_model(cfg, 6);
    const std::string path = "test_weights.bin";
    save_weights(w, path);

    const Weights loaded = load_weights(path, cfg);
    CHECK(loaded.config.d_model == cfg.d_model);
    // storage is f32, so loaded values match to float precision
    for (size_t i = 0; i < w.embedding.data.size(); ++i)
        CHECK(loaded.embedding.data[i] ==
              doctest::Approx(w.embedding.data[i]).epsilon(1e-6));

    // save(load(x)) is a fixed point
    save_weights(loaded, path + ".2");
    const Weights again = load_weights(path + ".2");
    CHECK(again.embedding.data == loaded.embedding.data);
    CHECK(again.layers[0].w2.data == loaded.layers[0].w2.data);

    ModelConfig other = cfg;
    other.heads = 1;
    CHECK_THROWS_AS(load_weights(path, other), FormatError);
    CHECK_THROWS_AS(load_weights("does_not_exist.bin"), FormatError);
    std::remove(path.c_str());
    std::remove((path + ".2").c_str());
}

} // TEST_SUITE
