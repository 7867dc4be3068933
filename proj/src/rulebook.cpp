// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/rulebook.hpp"

#include "sp3d/error.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <ostream>

namespace sp3d {

namespace {

struct AxisRange {
    int32_t lo;
    int32_t hi; // inclusive
};

// Output index range along one axis reachable from input coordinate p.
AxisRange axis_outputs(int32_t p, int32_t k, int32_t s, int32_t out_dim, ConvMode mode) {
    switch (mode) {
    case ConvMode::Standard: {
        // o * s <= p <= o * s + k - 1
        int32_t first = p - k + 1;
        int32_t lo = first <= 0 ? 0 : (first + s - 1) / s;
        int32_t hi = std::min(out_dim - 1, p / s);
        return {lo, hi};
    }
    case ConvMode::Submanifold: {
        int32_t r = (k - 1) / 2;
        return {std::max(0, p - r), std::min(out_dim - 1, p + r)};
    }
    case ConvMode::Transposed:
        return {p * s, p * s + k - 1};
    }
    return {0, -1};
}

template <typename Fn>
void for_each_output(const Coord3& p, const ConvGeometry& g, const Shape3& out_shape, Fn&& fn) {
    AxisRange r[3];
    for (int axis = 0; axis < 3; ++axis) {
        r[axis] = axis_outputs(p[axis], g.kernel[axis], g.stride[axis], out_shape[axis], g.mode);
    }
    Coord3 o;
    for (o.h = r[0].lo; o.h <= r[0].hi; ++o.h) {
        for (o.w = r[1].lo; o.w <= r[1].hi; ++o.w) {
            for (o.l = r[2].lo; o.l <= r[2].hi; ++o.l) {
                fn(o);
            }
        }
    }
}

Coord3 raw_offset(const Coord3& p_in, const Coord3& p_out, const ConvGeometry& g) {
    Coord3 off;
    for (int axis = 0; axis < 3; ++axis) {
        switch (g.mode) {
        case ConvMode::Standard:
            off[axis] = p_in[axis] - p_out[axis] * g.stride[axis];
            break;
        case ConvMode::Submanifold:
            off[axis] = p_in[axis] - p_out[axis] + (g.kernel[axis] - 1) / 2;
            break;
        case ConvMode::Transposed:
            off[axis] = p_out[axis] - p_in[axis] * g.stride[axis];
            break;
        }
    }
    return off;
}

} // namespace

std::string_view to_string(ConvMode mode) {
    switch (mode) {
    case ConvMode::Standard:
        return "standard";
    case ConvMode::Submanifold:
        return "submanifold";
    case ConvMode::Transposed:
        return "transposed";
    }
    return "unknown";
}

ConvMode conv_mode_from_string(std::string_view name) {
    if (name == "standard") {
        return ConvMode::Standard;
    }
    if (name == "submanifold") {
        return ConvMode::Submanifold;
    }
    if (name == "transposed") {
        return ConvMode::Transposed;
    }
    throw Error(fmt::format("unknown convolution mode '{}'", name));
}

void validate(const ConvGeometry& g) {
    if (!g.kernel.positive() || !g.stride.positive() || !g.in_shape.positive()) {
        throw Error("ConvGeometry: kernel, stride and input shape must be positive");
    }
    for (int axis = 0; axis < 3; ++axis) {
        int32_t k = g.kernel[axis];
        int32_t s = g.stride[axis];
        int32_t d = g.in_shape[axis];
        switch (g.mode) {
        case ConvMode::Submanifold:
            if (k % 2 == 0 || s != 1) {
                throw Error(fmt::format(
                    "ConvGeometry: submanifold needs odd kernel and unit stride (axis {}: k={}, s={})",
                    axis, k, s));
            }
            break;
        case ConvMode::Standard:
            if (k > d) {
                throw Error(fmt::format("ConvGeometry: kernel {} exceeds input dim {} on axis {}", k, d, axis));
            }
            if ((d - k) % s != 0) {
                throw Error(fmt::format(
                    "ConvGeometry: (d_in - k) = {} not divisible by stride {} on axis {}; pad the input",
                    d - k, s, axis));
            }
            break;
        case ConvMode::Transposed:
            break;
        }
    }
}

Shape3 output_shape(const ConvGeometry& g) {
    validate(g);
    Shape3 out;
    for (int axis = 0; axis < 3; ++axis) {
        int32_t k = g.kernel[axis];
        int32_t s = g.stride[axis];
        int32_t d = g.in_shape[axis];
        switch (g.mode) {
        case ConvMode::Standard:
            out[axis] = (d - k) / s + 1;
            break;
        case ConvMode::Submanifold:
            out[axis] = d;
            break;
        case ConvMode::Transposed:
            out[axis] = (d - 1) * s + k;
            break;
        }
    }
    return out;
}

std::vector<Coord3> get_output_coords(const Coord3& p_in, const ConvGeometry& g) {
    Shape3 out = output_shape(g);
    if (!g.in_shape.contains(p_in)) {
        throw Error("get_output_coords: input coordinate out of bounds");
    }
    std::vector<Coord3> coords;
    for_each_output(p_in, g, out, [&](const Coord3& o) { coords.push_back(o); });
    return coords;
}

Coord3 get_offset(const Coord3& p_in, const Coord3& p_out, const ConvGeometry& g) {
    Coord3 off = raw_offset(p_in, p_out, g);
    for (int axis = 0; axis < 3; ++axis) {
        if (off[axis] < 0 || off[axis] >= g.kernel[axis]) {
            throw Error(fmt::format("get_offset: offset ({}, {}, {}) outside kernel", off.h, off.w, off.l));
        }
    }
    return off;
}

size_t RuleBook::total_pairs() const {
    size_t total = 0;
    for (const auto& r : rules) {
        total += r.size();
    }
    return total;
}

RuleBook build_rulebook(const IndexPtr& input_index, const ConvGeometry& g) {
    RuleBook rb;
    rb.geometry = g;
    rb.out_shape = output_shape(g);
    rb.rules.resize(static_cast<size_t>(g.volume()));
    rb.in_count = input_index->size();
    const auto& keys = input_index->keys();

    if (g.mode == ConvMode::Submanifold) {
        rb.out_index = input_index;
        for (int32_t in_row = 0; in_row < rb.in_count; ++in_row) {
            const Coord3& p = keys[static_cast<size_t>(in_row)];
            for_each_output(p, g, rb.out_shape, [&](const Coord3& o) {
                int32_t out_row = input_index->row_of(o);
                if (out_row < 0) {
                    return;
                }
                auto& r = rb.rules[static_cast<size_t>(g.offset_id(raw_offset(p, o, g)))];
                r.in_rows.push_back(in_row);
                r.out_rows.push_back(out_row);
            });
        }
        return rb;
    }

    auto out_index = std::make_shared<ActiveIndex>();
    out_index->reserve(static_cast<size_t>(rb.in_count));
    for (int32_t in_row = 0; in_row < rb.in_count; ++in_row) {
        const Coord3& p = keys[static_cast<size_t>(in_row)];
        for_each_output(p, g, rb.out_shape, [&](const Coord3& o) {
            int32_t out_row = out_index->insert(o).first;
            auto& r = rb.rules[static_cast<size_t>(g.offset_id(raw_offset(p, o, g)))];
            r.in_rows.push_back(in_row);
            r.out_rows.push_back(out_row);
        });
    }
    rb.out_index = std::move(out_index);
    return rb;
}

void write_rulebook(std::ostream& os, const RuleBook& rb) {
    const ConvGeometry& g = rb.geometry;
    for (int32_t id = 0; id < g.volume(); ++id) {
        Coord3 off = g.offset_of(id);
        const auto& r = rb.rules[static_cast<size_t>(id)];
        fmt::print(os, "offset {} {} {} {}\n", off.h, off.w, off.l, r.size());
        for (size_t i = 0; i < r.size(); ++i) {
            fmt::print(os, "{} {}\n", r.in_rows[i], r.out_rows[i]);
        }
    }
}

} // namespace sp3d
