// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/params.hpp"

#include "sp3d/error.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace sp3d {

namespace {

constexpr std::array<std::string_view, 6> kKindNames{"standard", "submanifold", "transposed",
                                                      "conv2d",   "deconv2d",    "linear"};

static_assert(std::endian::native == std::endian::little, "weight files assume a little-endian host");

void write_doubles(std::ostream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& is, std::vector<double>& v, const std::string& layer) {
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (static_cast<size_t>(is.gcount()) != v.size() * sizeof(double)) {
        throw Error(fmt::format("weight file truncated in layer '{}'", layer));
    }
}

} // namespace

std::string_view to_string(LayerKind kind) { return kKindNames[static_cast<size_t>(kind)]; }

LayerKind layer_kind_from_string(std::string_view name) {
    auto it = std::find(kKindNames.begin(), kKindNames.end(), name);
    if (it == kKindNames.end()) {
        throw Error(fmt::format("unknown layer kind '{}'", name));
    }
    return static_cast<LayerKind>(it - kKindNames.begin());
}

Layer& ParamStore::add(std::string name, LayerKind kind, int c_in, int c_out, Shape3 kernel, Shape3 stride) {
    if (contains(name)) {
        throw Error(fmt::format("duplicate layer name '{}'", name));
    }
    if (c_in <= 0 || c_out <= 0 || !kernel.positive() || !stride.positive()) {
        throw Error(fmt::format("layer '{}': channels, kernel and stride must be positive", name));
    }
    Layer layer{std::move(name), kind, kernel, stride,
                ConvWeights(c_in, static_cast<int32_t>(kernel.volume()), c_out)};
    layers_.push_back(std::move(layer));
    return layers_.back();
}

bool ParamStore::contains(std::string_view name) const {
    return std::any_of(layers_.begin(), layers_.end(), [&](const Layer& l) { return l.name == name; });
}

const Layer& ParamStore::get(std::string_view name) const {
    for (const auto& l : layers_) {
        if (l.name == name) {
            return l;
        }
    }
    throw Error(fmt::format("no layer named '{}'", name));
}

Layer& ParamStore::get(std::string_view name) {
    return const_cast<Layer&>(static_cast<const ParamStore&>(*this).get(name));
}

size_t ParamStore::parameter_count() const {
    size_t n = 0;
    for (const auto& l : layers_) {
        n += l.w.parameter_count();
    }
    return n;
}

ParamStore ParamStore::zeros_like() const {
    ParamStore out;
    out.layers_ = layers_;
    for (auto& l : out.layers_) {
        l.w = l.w.zeros_like();
    }
    return out;
}

void ParamStore::init_he(std::mt19937_64& rng) {
    for (auto& l : layers_) {
        init_he_normal(l.w, rng);
    }
}

void write_weights(std::ostream& os, const ParamStore& store) {
    fmt::print(os, "SP3DW 1\n");
    for (const auto& l : store.layers()) {
        fmt::print(os, "{} {} {} {} {} {} {} {} {} {}\n", l.name, l.w.c_in, l.w.c_out, l.kernel.h, l.kernel.w,
                   l.kernel.l, l.stride.h, l.stride.w, l.stride.l, to_string(l.kind));
    }
    fmt::print(os, "end\n");
    for (const auto& l : store.layers()) {
        write_doubles(os, l.w.weights);
        write_doubles(os, l.w.bias);
    }
}

void read_weights(std::istream& is, ParamStore& store) {
    std::string line;
    if (!std::getline(is, line) || line != "SP3DW 1") {
        throw Error("not a weight file (bad magic line)");
    }
    size_t index = 0;
    while (true) {
        if (!std::getline(is, line)) {
            throw Error("weight file header is missing its 'end' line");
        }
        if (line == "end") {
            break;
        }
        std::istringstream ss(line);
        std::string name;
        std::string kind;
        int c_in = 0;
        int c_out = 0;
        Shape3 k;
        Shape3 s;
        if (!(ss >> name >> c_in >> c_out >> k.h >> k.w >> k.l >> s.h >> s.w >> s.l >> kind)) {
            throw Error(fmt::format("malformed weight header line: '{}'", line));
        }
        if (index >= store.layers().size()) {
            throw Error(fmt::format("weight file has extra layer '{}'", name));
        }
        const Layer& l = store.layers()[index];
        if (l.name != name || l.kind != layer_kind_from_string(kind) || l.w.c_in != c_in || l.w.c_out != c_out ||
            l.kernel != k || l.stride != s) {
            throw Error(fmt::format("weight file layer '{}' does not match model layer '{}'", name, l.name));
        }
        ++index;
    }
    if (index != store.layers().size()) {
        throw Error(fmt::format("weight file has {} layers, model has {}", index, store.layers().size()));
    }
    for (auto& l : store.layers()) {
        read_doubles(is, l.w.weights, l.name);
        read_doubles(is, l.w.bias, l.name);
    }
}

void save_weights(const std::string& path, const ParamStore& store) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error(fmt::format("cannot write '{}'", path));
    }
    write_weights(os, store);
}

void load_weights(const std::string& path, ParamStore& store) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error(fmt::format("cannot read '{}'", path));
    }
    read_weights(is, store);
}

} // namespace sp3d
