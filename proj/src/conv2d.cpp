// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/conv2d.hpp"

#include "sp3d/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace sp3d {

namespace {

void check_weights(const Map2D& in, const Conv2dSpec& spec, const ConvWeights& w, const char* what) {
    if (spec.kernel <= 0 || spec.stride <= 0 || spec.pad < 0) {
        throw Error(fmt::format("{}: invalid kernel/stride/pad", what));
    }
    if (w.c_in != in.channels || w.volume != spec.volume()) {
        throw Error(fmt::format("{}: weights {}x{}x{} do not match input channels {} and kernel {}", what,
                                w.c_in, w.volume, w.c_out, in.channels, spec.kernel));
    }
}

// Visits every (output pixel, input pixel, offset) incidence of a strided,
// padded convolution. `fn(oy, ox, iy, ix, off)`.
template <typename Fn>
void for_each_incidence(int out_w, int out_l, int in_w, int in_l, const Conv2dSpec& spec, Fn&& fn) {
    for (int ki = 0; ki < spec.kernel; ++ki) {
        for (int kj = 0; kj < spec.kernel; ++kj) {
            int off = ki * spec.kernel + kj;
            for (int oy = 0; oy < out_w; ++oy) {
                int iy = oy * spec.stride + ki - spec.pad;
                if (iy < 0 || iy >= in_w) {
                    continue;
                }
                for (int ox = 0; ox < out_l; ++ox) {
                    int ix = ox * spec.stride + kj - spec.pad;
                    if (ix < 0 || ix >= in_l) {
                        continue;
                    }
                    fn(oy, ox, iy, ix, off);
                }
            }
        }
    }
}

void finish(Map2D& out, const ConvWeights& w, ActivationKind act) {
    size_t plane = out.plane();
    for (int co = 0; co < out.channels; ++co) {
        double b = w.bias[static_cast<size_t>(co)];
        double* p = out.data.data() + static_cast<size_t>(co) * plane;
        for (size_t i = 0; i < plane; ++i) {
            p[i] = activate(p[i] + b, act);
        }
    }
}

void bias_grad(ConvWeights& g, const Map2D& grad_out) {
    size_t plane = grad_out.plane();
    for (int co = 0; co < grad_out.channels; ++co) {
        double sum = 0.0;
        const double* p = grad_out.data.data() + static_cast<size_t>(co) * plane;
        for (size_t i = 0; i < plane; ++i) {
            sum += p[i];
        }
        g.bias[static_cast<size_t>(co)] = sum;
    }
}

} // namespace

std::pair<int, int> conv2d_output_dims(int w, int l, const Conv2dSpec& spec) {
    int ow = (w + 2 * spec.pad - spec.kernel) / spec.stride + 1;
    int ol = (l + 2 * spec.pad - spec.kernel) / spec.stride + 1;
    if (w + 2 * spec.pad < spec.kernel || l + 2 * spec.pad < spec.kernel || ow <= 0 || ol <= 0) {
        throw Error(fmt::format("conv2d: kernel {} does not fit a {}x{} map", spec.kernel, w, l));
    }
    return {ow, ol};
}

std::pair<int, int> deconv2d_output_dims(int w, int l, const Conv2dSpec& spec) {
    int ow = (w - 1) * spec.stride + spec.kernel - 2 * spec.pad;
    int ol = (l - 1) * spec.stride + spec.kernel - 2 * spec.pad;
    if (ow <= 0 || ol <= 0) {
        throw Error("deconv2d: non-positive output size");
    }
    return {ow, ol};
}

Map2D dense_conv2d(const Map2D& in, const Conv2dSpec& spec, const ConvWeights& w, ActivationKind act) {
    check_weights(in, spec, w, "dense_conv2d");
    auto [ow, ol] = conv2d_output_dims(in.w, in.l, spec);
    Map2D out(w.c_out, ow, ol);
    for (int ci = 0; ci < in.channels; ++ci) {
        for (int co = 0; co < w.c_out; ++co) {
            for_each_incidence(ow, ol, in.w, in.l, spec, [&](int oy, int ox, int iy, int ix, int off) {
                out.at(co, oy, ox) += in.at(ci, iy, ix) * w.at(ci, off, co);
            });
        }
    }
    finish(out, w, act);
    return out;
}

Map2D dense_deconv2d(const Map2D& in, const Conv2dSpec& spec, const ConvWeights& w, ActivationKind act) {
    check_weights(in, spec, w, "dense_deconv2d");
    auto [ow, ol] = deconv2d_output_dims(in.w, in.l, spec);
    Map2D out(w.c_out, ow, ol);
    // The deconvolution scatters input pixel (iy, ix) to output pixel
    // (iy * s + ki - p, ix * s + kj - p): the conv incidence with roles swapped.
    for (int ci = 0; ci < in.channels; ++ci) {
        for (int co = 0; co < w.c_out; ++co) {
            for_each_incidence(in.w, in.l, ow, ol, spec, [&](int iy, int ix, int oy, int ox, int off) {
                out.at(co, oy, ox) += in.at(ci, iy, ix) * w.at(ci, off, co);
            });
        }
    }
    finish(out, w, act);
    return out;
}

Conv2dGrads dense_conv2d_backward(const Map2D& in, const Conv2dSpec& spec, const ConvWeights& w,
                                  const Map2D& grad_out) {
    check_weights(in, spec, w, "dense_conv2d_backward");
    auto [ow, ol] = conv2d_output_dims(in.w, in.l, spec);
    if (grad_out.channels != w.c_out || grad_out.w != ow || grad_out.l != ol) {
        throw Error("dense_conv2d_backward: gradient shape mismatch");
    }
    Conv2dGrads g{w.zeros_like(), Map2D(in.channels, in.w, in.l)};
    for (int ci = 0; ci < in.channels; ++ci) {
        for (int co = 0; co < w.c_out; ++co) {
            for_each_incidence(ow, ol, in.w, in.l, spec, [&](int oy, int ox, int iy, int ix, int off) {
                double up = grad_out.at(co, oy, ox);
                g.params.at(ci, off, co) += in.at(ci, iy, ix) * up;
                g.input.at(ci, iy, ix) += w.at(ci, off, co) * up;
            });
        }
    }
    bias_grad(g.params, grad_out);
    return g;
}

Conv2dGrads dense_deconv2d_backward(const Map2D& in, const Conv2dSpec& spec, const ConvWeights& w,
                                    const Map2D& grad_out) {
    check_weights(in, spec, w, "dense_deconv2d_backward");
    auto [ow, ol] = deconv2d_output_dims(in.w, in.l, spec);
    if (grad_out.channels != w.c_out || grad_out.w != ow || grad_out.l != ol) {
        throw Error("dense_deconv2d_backward: gradient shape mismatch");
    }
    Conv2dGrads g{w.zeros_like(), Map2D(in.channels, in.w, in.l)};
    for (int ci = 0; ci < in.channels; ++ci) {
        for (int co = 0; co < w.c_out; ++co) {
            for_each_incidence(in.w, in.l, ow, ol, spec, [&](int iy, int ix, int oy, int ox, int off) {
                double up = grad_out.at(co, oy, ox);
                g.params.at(ci, off, co) += in.at(ci, iy, ix) * up;
                g.input.at(ci, iy, ix) += w.at(ci, off, co) * up;
            });
        }
    }
    bias_grad(g.params, grad_out);
    return g;
}

Map2D relu_backward(const Map2D& output, const Map2D& grad) {
    if (!output.same_dims(grad)) {
        throw Error("relu_backward: shape mismatch");
    }
    Map2D g = grad;
    for (size_t i = 0; i < g.data.size(); ++i) {
        if (!(output.data[i] > 0.0)) {
            g.data[i] = 0.0;
        }
    }
    return g;
}

Map2D concat_maps(std::span<const Map2D> maps) {
    if (maps.empty()) {
        throw Error("concat_maps: no inputs");
    }
    int channels = 0;
    for (const auto& m : maps) {
        if (m.w != maps[0].w || m.l != maps[0].l) {
            throw Error(fmt::format("concat_maps: grid {}x{} does not match {}x{}", m.w, m.l, maps[0].w, maps[0].l));
        }
        channels += m.channels;
    }
    Map2D out(channels, maps[0].w, maps[0].l);
    auto it = out.data.begin();
    for (const auto& m : maps) {
        it = std::copy(m.data.begin(), m.data.end(), it);
    }
    return out;
}

std::vector<Map2D> split_channels(const Map2D& m, std::span<const int> channels) {
    std::vector<Map2D> parts;
    auto it = m.data.begin();
    int total = 0;
    for (int c : channels) {
        total += c;
    }
    if (total != m.channels) {
        throw Error("split_channels: channel counts do not sum to the map's channels");
    }
    for (int c : channels) {
        Map2D part(c, m.w, m.l);
        auto n = static_cast<std::ptrdiff_t>(part.data.size());
        std::copy(it, it + n, part.data.begin());
        it += n;
        parts.push_back(std::move(part));
    }
    return parts;
}

} // namespace sp3d
