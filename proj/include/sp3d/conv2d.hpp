// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Dense 2D (bird's-eye view) feature maps and their convolutions.
//
#pragma once

#include "sp3d/weights.hpp"

#include <span>
#include <utility>
#include <vector>

namespace sp3d {

/// Dense c x w x l map, channel-major.
struct Map2D {
    int channels = 0;
    int w = 0;
    int l = 0;
    std::vector<double> data;

    Map2D() = default;
    Map2D(int channels, int w, int l)
        : channels(channels), w(w), l(l),
          data(static_cast<size_t>(channels) * static_cast<size_t>(w) * static_cast<size_t>(l), 0.0) {}

    size_t plane() const { return static_cast<size_t>(w) * static_cast<size_t>(l); }
    double& at(int c, int i, int j) { return data[static_cast<size_t>(c) * plane() + static_cast<size_t>(i) * l + j]; }
    double at(int c, int i, int j) const {
        return data[static_cast<size_t>(c) * plane() + static_cast<size_t>(i) * l + j];
    }
    bool same_dims(const Map2D& o) const { return channels == o.channels && w == o.w && l == o.l; }
};

/// Square kernel; offset id = i * kernel + j.
struct Conv2dSpec {
    int kernel = 3;
    int stride = 1;
    int pad = 0;

    int volume() const { return kernel * kernel; }
};

/// (d + 2p - k) / s + 1 per axis; throws if non-positive.
std::pair<int, int> conv2d_output_dims(int w, int l, const Conv2dSpec& spec);
/// (d - 1) * s + k - 2p per axis.
std::pair<int, int> deconv2d_output_dims(int w, int l, const Conv2dSpec& spec);

Map2D dense_conv2d(const Map2D& in, const Conv2dSpec& spec, const ConvWeights& w, ActivationKind act);
Map2D dense_deconv2d(const Map2D& in, const Conv2dSpec& spec, const ConvWeights& w, ActivationKind act);

struct Conv2dGrads {
    ConvWeights params;
    Map2D input;
};

/// `grad_out` is the gradient w.r.t. the pre-activation output.
Conv2dGrads dense_conv2d_backward(const Map2D& in, const Conv2dSpec& spec, const ConvWeights& w,
                                  const Map2D& grad_out);
Conv2dGrads dense_deconv2d_backward(const Map2D& in, const Conv2dSpec& spec, const ConvWeights& w,
                                    const Map2D& grad_out);

Map2D relu_backward(const Map2D& output, const Map2D& grad);

/// Channel concatenation of equally sized maps.
Map2D concat_maps(std::span<const Map2D> maps);
/// Inverse of concat_maps for gradients: splits by the given channel counts.
std::vector<Map2D> split_channels(const Map2D& m, std::span<const int> channels);

} // namespace sp3d
