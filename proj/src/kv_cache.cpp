// Copyright (C) 2026 the finch authors
// SPDX-License-Identifier: Apache-2.0

#include "finch/kv_cache.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <string>

#include "finch/rope.hpp"

namespace finch {

KvCache::KvCache(int layers, int d_model, int d_head, int n_max, bool retain_pre_rope_shadows)
    : d_model_(d_model), d_head_(d_head), n_max_(n_max), retain_shadows_(retain_pre_rope_shadows) {
    if (layers < 1 || d_model < 1 || d_head < 1 || d_model % d_head != 0 || n_max < 1)
        throw ParameterError("KvCache: bad geometry");
    keys_.assign(layers, Matrix(0, d_model));
    values_.assign(layers, Matrix(0, d_model));
    pre_rope_keys_.assign(layers, Matrix(0, d_model));
    positions_.resize(layers);
    provenance_.resize(layers);
}

int KvCache::next_position() const {
    if (length_ == 0) return 0;
    return positions_[0].back() + 1;
}

void KvCache::append(const std::vector<Matrix> &k_rows, const std::vector<Matrix> &v_rows,
                     std::span<const int> positions, std::span<const long long> provenance,
                     const std::vector<Matrix> *pre_rope_rows) {
    const int layers = layer_count();
    const int add = static_cast<int>(positions.size());
    if (static_cast<int>(k_rows.size()) != layers || static_cast<int>(v_rows.size()) != layers)
        throw ShapeError("KvCache::append: one K and V block per layer required");
    if (provenance.size() != positions.size())
        throw ShapeError("KvCache::append: provenance/positions length mismatch");
    if (length_ + add > n_max_)
        throw CapacityError("KvCache::append: " + std::to_string(length_ + add) + " rows exceed n_max = " +
                            std::to_string(n_max_));
    const int floor_pos = next_position();
    for (int i = 0; i < add; ++i) {
        if (positions[i] < floor_pos + i || (i > 0 && positions[i] <= positions[i - 1]))
            throw ParameterError("KvCache::append: positions must increase past the cache");
    }
    if (retain_shadows_ && pre_rope_rows == nullptr)
        throw ParameterError("KvCache::append: shadow-retaining cache needs pre-rotation keys");

    for (int l = 0; l < layers; ++l) {
        if (k_rows[l].rows != add || k_rows[l].cols != d_model_ || v_rows[l].rows != add ||
            v_rows[l].cols != d_model_)
            throw ShapeError("KvCache::append: row block shape mismatch");
        auto extend = [add, this](Matrix &dst, const Matrix &src) {
            dst.data.insert(dst.data.end(), src.data.begin(), src.data.end());
            dst.rows += add;
            dst.cols = d_model_;
        };
        extend(keys_[l], k_rows[l]);
        extend(values_[l], v_rows[l]);
        if (retain_shadows_) extend(pre_rope_keys_[l], (*pre_rope_rows)[l]);
        positions_[l].insert(positions_[l].end(), positions.begin(), positions.end());
        provenance_[l].insert(provenance_[l].end(), provenance.begin(), provenance.end());
    }
    length_ += add;
}

void KvCache::validate_selection(const std::vector<int> &sel, int columns, size_t expected) const {
    if (sel.size() != expected)
        throw SelectionError("select_and_reposition: layers must retain the same row count");
    std::vector<char> seen(columns, 0);
    for (int idx : sel) {
        if (idx < 0 || idx >= columns)
            throw SelectionError("select_and_reposition: index " + std::to_string(idx) +
                                 " outside " + std::to_string(columns) + " columns");
        if (seen[idx]) throw SelectionError("select_and_reposition: duplicate index " + std::to_string(idx));
        seen[idx] = 1;
    }
}

void KvCache::select_and_reposition(const ChunkKv &chunk, const SelectionResult &selection,
                                    OrderMode mode) {
    const int layers = layer_count();
    const int c = length_;
    const int m = static_cast<int>(chunk.positions.size());
    const int columns = c + m;
    if (static_cast<int>(selection.per_layer.size()) != layers)
        throw SelectionError("select_and_reposition: one selection per layer required");
    if (static_cast<int>(chunk.keys.size()) != layers || static_cast<int>(chunk.values.size()) != layers)
        throw ShapeError("select_and_reposition: chunk must cover every layer");
    if (retain_shadows_ && static_cast<int>(chunk.pre_rope_keys.size()) != layers)
        throw ParameterError("select_and_reposition: shadow-retaining cache needs pre-rotation keys");
    const size_t r = selection.per_layer.empty() ? 0 : selection.per_layer[0].size();
    for (const auto &sel : selection.per_layer) validate_selection(sel, columns, r);

#pragma omp parallel for schedule(static)
    for (int l = 0; l < layers; ++l) {
        std::vector<int> order = selection.per_layer[l];
        if (mode == OrderMode::Positional) std::sort(order.begin(), order.end());

        Matrix new_k(static_cast<int>(r), d_model_);
        Matrix new_v(static_cast<int>(r), d_model_);
        Matrix new_pre(retain_shadows_ ? static_cast<int>(r) : 0, d_model_);
        std::vector<int> new_pos(r);
        std::vector<long long> new_prov(r);

        for (size_t slot = 0; slot < r; ++slot) {
            const int idx = order[slot];
            const bool from_cache = idx < c;
            const Matrix &src_k = from_cache ? keys_[l] : chunk.keys[l];
            const Matrix &src_v = from_cache ? values_[l] : chunk.values[l];
            const int row = from_cache ? idx : idx - c;
            const int old_pos = from_cache ? positions_[l][row] : chunk.positions[row];
            const int new_position = static_cast<int>(slot);

            std::memcpy(new_k.row(static_cast<int>(slot)), src_k.row(row), sizeof(double) * d_model_);
            rope_rotate_row(new_k.row(static_cast<int>(slot)), d_model_, d_head_,
                            static_cast<long long>(new_position) - old_pos);
            std::memcpy(new_v.row(static_cast<int>(slot)), src_v.row(row), sizeof(double) * d_model_);
            if (retain_shadows_) {
                const Matrix &src_pre = from_cache ? pre_rope_keys_[l] : chunk.pre_rope_keys[l];
                std::memcpy(new_pre.row(static_cast<int>(slot)), src_pre.row(row),
                            sizeof(double) * d_model_);
            }
            new_pos[slot] = new_position;
            new_prov[slot] = from_cache ? provenance_[l][row] : chunk.provenance[row];
        }

        keys_[l] = std::move(new_k);
        values_[l] = std::move(new_v);
        if (retain_shadows_) pre_rope_keys_[l] = std::move(new_pre);
        positions_[l] = std::move(new_pos);
        provenance_[l] = std::move(new_prov);
    }
    length_ = static_cast<int>(r);
}

void KvCache::clear() {
    for (int l = 0; l < layer_count(); ++l) {
        keys_[l] = Matrix(0, d_model_);
        values_[l] = Matrix(0, d_model_);
        pre_rope_keys_[l] = Matrix(0, d_model_);
        positions_[l].clear();
        provenance_[l].clear();
    }
    length_ = 0;
}

long long memory_bytes(const KvCache &cache, int bytes_per_element) {
    return 2LL * cache.layer_count() * cache.length() * cache.d_model() * bytes_per_element;
}

namespace {

constexpr std::uint32_t kSnapshotMagic = 0x46434B56u; // "VKCF" on disk
constexpr std::uint32_t kSnapshotVersion = 1u;

void put_u32(std::ofstream &out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char *>(b), 4);
}

void put_f32_matrix(std::ofstream &out, const Matrix &m) {
    for (double x : m.data) {
        const float f = static_cast<float>(x);
        static_assert(sizeof(float) == 4);
        out.write(reinterpret_cast<const char *>(&f), 4);
    }
}

} // namespace

void dump_snapshot(const KvCache &cache, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("dump_snapshot: cannot open " + path);
    put_u32(out, kSnapshotMagic);
    put_u32(out, kSnapshotVersion);
    put_u32(out, static_cast<std::uint32_t>(cache.layer_count()));
    put_u32(out, static_cast<std::uint32_t>(cache.d_model()));
    put_u32(out, static_cast<std::uint32_t>(cache.length()));
    for (int l = 0; l < cache.layer_count(); ++l) {
        put_f32_matrix(out, cache.keys(l));
        put_f32_matrix(out, cache.values(l));
    }
    if (!out) throw FormatError("dump_snapshot: write failed for " + path);

    std::ofstream txt(path + ".positions.txt");
    if (!txt) throw FormatError("dump_snapshot: cannot open " + path + ".positions.txt");
    for (int l = 0; l < cache.layer_count(); ++l) {
        txt << "layer " << l << "\n";
        const auto &pos = cache.positions(l);
        const auto &prov = cache.provenance(l);
        for (size_t i = 0; i < pos.size(); ++i)
            txt << "  pos " << pos[i] << " provenance " << prov[i] << "\n";
    }
}

} // namespace finch
