// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/conv2d.hpp"
#include "sp3d/error.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

namespace sp3d {
namespace {

using testing::random_weights;
using testing::rel_error;

Map2D random_map(std::mt19937_64& rng, int c, int w, int l) {
    std::uniform_real_distribution<double> value(-1.0, 1.0);
    Map2D m(c, w, l);
    for (double& v : m.data) {
        v = value(rng);
    }
    return m;
}

// Output-centric gather loops, written independently of the library kernels.
Map2D naive_conv(const Map2D& in, const Conv2dSpec& spec, const ConvWeights& w) {
    int ow = (in.w + 2 * spec.pad - spec.kernel) / spec.stride + 1;
    int ol = (in.l + 2 * spec.pad - spec.kernel) / spec.stride + 1;
    Map2D out(w.c_out, ow, ol);
    for (int co = 0; co < w.c_out; ++co) {
        for (int y = 0; y < ow; ++y) {
            for (int x = 0; x < ol; ++x) {
                double acc = w.bias[static_cast<size_t>(co)];
                for (int ki = 0; ki < spec.kernel; ++ki) {
                    for (int kj = 0; kj < spec.kernel; ++kj) {
                        int iy = y * spec.stride + ki - spec.pad;
                        int ix = x * spec.stride + kj - spec.pad;
                        if (iy < 0 || ix < 0 || iy >= in.w || ix >= in.l) {
                            continue;
                        }
                        for (int ci = 0; ci < in.channels; ++ci) {
                            acc += in.at(ci, iy, ix) * w.at(ci, ki * spec.kernel + kj, co);
                        }
                    }
                }
                out.at(co, y, x) = acc;
            }
        }
    }
    return out;
}

Map2D naive_deconv(const Map2D& in, const Conv2dSpec& spec, const ConvWeights& w) {
    int ow = (in.w - 1) * spec.stride + spec.kernel - 2 * spec.pad;
    int ol = (in.l - 1) * spec.stride + spec.kernel - 2 * spec.pad;
    Map2D out(w.c_out, ow, ol);
    for (int co = 0; co < w.c_out; ++co) {
        for (int y = 0; y < ow; ++y) {
            for (int x = 0; x < ol; ++x) {
                double acc = w.bias[static_cast<size_t>(co)];
                for (int ki = 0; ki < spec.kernel; ++ki) {
                    for (int kj = 0; kj < spec.kernel; ++kj) {
                        int ny = y + spec.pad - ki;
                        int nx = x + spec.pad - kj;
                        if (ny < 0 || nx < 0 || ny % spec.stride != 0 || nx % spec.stride != 0) {
                            continue;
                        }
                        int iy = ny / spec.stride;
                        int ix = nx / spec.stride;
                        if (iy >= in.w || ix >= in.l) {
                            continue;
                        }
                        for (int ci = 0; ci < in.channels; ++ci) {
                            acc += in.at(ci, iy, ix) * w.at(ci, ki * spec.kernel + kj, co);
                        }
                    }
                }
                out.at(co, y, x) = acc;
            }
        }
    }
    return out;
}

TEST(Conv2d, IdentityKernel) {
    std::mt19937_64 rng(1);
    auto in = random_map(rng, 3, 4, 5);
    ConvWeights id(3, 1, 3);
    for (int c = 0; c < 3; ++c) {
        id.at(c, 0, c) = 1.0;
    }
    EXPECT_EQ(dense_conv2d(in, {1, 1, 0}, id, ActivationKind::Identity).data, in.data);
    EXPECT_EQ(dense_deconv2d(in, {1, 1, 0}, id, ActivationKind::Identity).data, in.data);
}

TEST(Conv2d, OutputDims) {
    // Fusion geometry: 399 -> 199 (k3 s2), 99 -> 199 (k3 s2 transposed), 49 -> 199 (k7 s4 transposed).
    EXPECT_EQ(conv2d_output_dims(399, 351, {3, 2, 0}), std::make_pair(199, 175));
    EXPECT_EQ(deconv2d_output_dims(99, 87, {3, 2, 0}), std::make_pair(199, 175));
    EXPECT_EQ(deconv2d_output_dims(49, 43, {7, 4, 0}), std::make_pair(199, 175));
    EXPECT_EQ(conv2d_output_dims(31, 31, {3, 1, 1}), std::make_pair(31, 31));
    EXPECT_THROW(conv2d_output_dims(2, 5, {3, 1, 0}), Error);
}

TEST(Conv2d, MatchesNaiveLoops) {
    std::mt19937_64 rng(2);
    const Conv2dSpec specs[] = {{3, 1, 1}, {3, 2, 0}, {1, 1, 0}, {2, 2, 0}, {7, 4, 0}, {3, 2, 1}};
    for (const auto& spec : specs) {
        for (int trial = 0; trial < 5; ++trial) {
            auto in = random_map(rng, 2, 9, 11);
            auto w = random_weights(rng, 2, spec.volume(), 3);
            auto fast = dense_conv2d(in, spec, w, ActivationKind::Identity);
            auto slow = naive_conv(in, spec, w);
            ASSERT_TRUE(fast.same_dims(slow));
            for (size_t i = 0; i < fast.data.size(); ++i) {
                EXPECT_NEAR(fast.data[i], slow.data[i], 1e-9);
            }
            auto up = dense_deconv2d(in, spec, w, ActivationKind::Identity);
            auto up_slow = naive_deconv(in, spec, w);
            ASSERT_TRUE(up.same_dims(up_slow));
            for (size_t i = 0; i < up.data.size(); ++i) {
                EXPECT_NEAR(up.data[i], up_slow.data[i], 1e-9);
            }
        }
    }
}

template <typename Forward, typename Backward>
void check_gradients(std::mt19937_64& rng, const Conv2dSpec& spec, Forward forward, Backward backward) {
    auto in = random_map(rng, 2, 6, 7);
    auto w = random_weights(rng, 2, spec.volume(), 3);
    Map2D probe = forward(in, spec, w, ActivationKind::Identity);
    auto upstream = random_map(rng, probe.channels, probe.w, probe.l);
    auto loss = [&] {
        auto out = forward(in, spec, w, ActivationKind::Identity);
        double sum = 0.0;
        for (size_t i = 0; i < out.data.size(); ++i) {
            sum += out.data[i] * upstream.data[i];
        }
        return sum;
    };
    auto g = backward(in, spec, w, upstream);
    for (size_t i = 0; i < w.weights.size(); i += 5) {
        EXPECT_LT(rel_error(g.params.weights[i], testing::central_difference(w.weights[i], loss)), 1e-6);
    }
    for (size_t i = 0; i < w.bias.size(); ++i) {
        EXPECT_LT(rel_error(g.params.bias[i], testing::central_difference(w.bias[i], loss)), 1e-6);
    }
    for (size_t i = 0; i < in.data.size(); i += 3) {
        EXPECT_LT(rel_error(g.input.data[i], testing::central_difference(in.data[i], loss)), 1e-6);
    }
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(3);
    for (const Conv2dSpec& spec : {Conv2dSpec{3, 1, 1}, Conv2dSpec{3, 2, 0}, Conv2dSpec{2, 2, 0}}) {
        check_gradients(rng, spec, dense_conv2d, dense_conv2d_backward);
        check_gradients(rng, spec, dense_deconv2d, dense_deconv2d_backward);
    }
}

TEST(Conv2d, ConcatAndSplit) {
    std::mt19937_64 rng(4);
    std::vector<Map2D> parts{random_map(rng, 2, 3, 3), random_map(rng, 1, 3, 3)};
    auto joined = concat_maps(parts);
    EXPECT_EQ(joined.channels, 3);
    EXPECT_EQ(joined.at(2, 1, 1), parts[1].at(0, 1, 1));
    std::vector<int> counts{2, 1};
    auto split = split_channels(joined, counts);
    EXPECT_EQ(split[0].data, parts[0].data);
    EXPECT_EQ(split[1].data, parts[1].data);
    std::vector<Map2D> bad{random_map(rng, 1, 3, 3), random_map(rng, 1, 3, 4)};
    EXPECT_THROW(concat_maps(bad), Error);
}

} // namespace
} // namespace sp3d
