// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Rule book and output hash table generation for sparse 3D convolution.
//
// For every kernel offset the rule book stores the (input row, output row)
// pairs connected through that offset. Output rows are numbered on first
// visit while iterating active inputs in row order, so a build is a pure
// function of the input index.
//
#pragma once

#include "sp3d/sparse_tensor.hpp"

#include <iosfwd>
#include <string_view>
#include <vector>

namespace sp3d {

enum class ConvMode { Standard, Submanifold, Transposed };

std::string_view to_string(ConvMode mode);
ConvMode conv_mode_from_string(std::string_view name);

/// Kernel geometry of one sparse convolution. Offsets are linearized
/// row-major: id = (i * k_w + j) * k_l + k.
struct ConvGeometry {
    Shape3 kernel{3, 3, 3};
    Shape3 stride{1, 1, 1};
    ConvMode mode = ConvMode::Standard;
    Shape3 in_shape;

    int32_t volume() const { return static_cast<int32_t>(kernel.volume()); }
    int32_t offset_id(const Coord3& off) const { return (off.h * kernel.w + off.w) * kernel.l + off.l; }
    Coord3 offset_of(int32_t id) const {
        return {id / (kernel.w * kernel.l), (id / kernel.l) % kernel.w, id % kernel.l};
    }
};

/// Throws Error when the geometry is unusable:
///  - Submanifold needs odd kernel dims and unit stride.
///  - Standard needs kernel <= input per axis and (d_in - k) divisible by s.
void validate(const ConvGeometry& g);

/// Standard: (d - k) / s + 1. Submanifold: d. Transposed: (d - 1) * s + k.
Shape3 output_shape(const ConvGeometry& g);

/// All output coordinates a given input site contributes to, in
/// lexicographic order. Submanifold candidates are not filtered by activity.
std::vector<Coord3> get_output_coords(const Coord3& p_in, const ConvGeometry& g);

/// Kernel offset of `p_in` within the window of `p_out`.
///  - Standard:    p_in - p_out * s
///  - Submanifold: p_in - p_out + (k - 1) / 2
///  - Transposed:  p_out - p_in * s (the forward offset with roles swapped)
/// Throws Error if the result falls outside [0, k).
Coord3 get_offset(const Coord3& p_in, const Coord3& p_out, const ConvGeometry& g);

struct OffsetRules {
    std::vector<int32_t> in_rows;
    std::vector<int32_t> out_rows;

    size_t size() const { return in_rows.size(); }
};

struct RuleBook {
    ConvGeometry geometry;
    std::vector<OffsetRules> rules; // one entry per kernel offset
    IndexPtr out_index;
    Shape3 out_shape;
    int32_t in_count = 0;

    int32_t out_count() const { return out_index->size(); }
    size_t counter(int32_t offset_id) const { return rules[static_cast<size_t>(offset_id)].size(); }
    size_t total_pairs() const;
};

/// Builds the rule book for `g` over the active sites of `input_index`.
/// Submanifold output shares `input_index` verbatim. Transposed output
/// activity is every site reachable from an active input.
RuleBook build_rulebook(const IndexPtr& input_index, const ConvGeometry& g);

/// Debug dump: "offset i j k count" headers followed by "in out" pair lines,
/// offsets in row-major order.
void write_rulebook(std::ostream& os, const RuleBook& rb);

} // namespace sp3d
