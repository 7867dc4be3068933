// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Named parameter layers and the weight file format.
//
// A weight file is a text header followed by raw little-endian doubles:
//
//   SP3DW 1
//   <name> <c_in> <c_out> <kh> <kw> <kl> <sh> <sw> <sl> <kind>
//   ...
//   end
//   <weights then bias of each layer, in header order>
//
#pragma once

#include "sp3d/sparse_tensor.hpp"
#include "sp3d/weights.hpp"

#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace sp3d {

enum class LayerKind { Standard, Submanifold, Transposed, Conv2d, Deconv2d, Linear };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

struct Layer {
    std::string name;
    LayerKind kind = LayerKind::Linear;
    Shape3 kernel{1, 1, 1};
    Shape3 stride{1, 1, 1};
    ConvWeights w;
};

class ParamStore {
public:
    /// Appends a zero-initialized layer; names must be unique.
    Layer& add(std::string name, LayerKind kind, int c_in, int c_out, Shape3 kernel, Shape3 stride);

    const Layer& get(std::string_view name) const;
    Layer& get(std::string_view name);
    bool contains(std::string_view name) const;

    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    size_t parameter_count() const;

    /// Same layer list with zero weights; used to accumulate gradients.
    ParamStore zeros_like() const;

    /// He-normal weights, zero biases, layer by layer in order.
    void init_he(std::mt19937_64& rng);

private:
    std::vector<Layer> layers_;
};

void write_weights(std::ostream& os, const ParamStore& store);

/// Reads a weight file into `store`, whose layer list must match the file
/// exactly (names, kinds and shapes). Throws Error on any mismatch.
void read_weights(std::istream& is, ParamStore& store);

void save_weights(const std::string& path, const ParamStore& store);
void load_weights(const std::string& path, ParamStore& store);

} // namespace sp3d
