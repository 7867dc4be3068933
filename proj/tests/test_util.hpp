// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Shared generators and numeric helpers for the test suites.
//
#pragma once

#include "sp3d/sparse_tensor.hpp"
#include "sp3d/weights.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace sp3d::testing {

/// Random tensor: each site active with probability `density`, rows drawn
/// from U[-1, 1] (never exactly zero), row order shuffled so that row ids are
/// not lexicographic.
inline SparseTensor3 random_tensor(std::mt19937_64& rng, Shape3 shape, int channels, double density) {
    std::bernoulli_distribution active(density);
    std::uniform_real_distribution<double> value(-1.0, 1.0);
    std::vector<Site> sites;
    Coord3 p;
    for (p.h = 0; p.h < shape.h; ++p.h) {
        for (p.w = 0; p.w < shape.w; ++p.w) {
            for (p.l = 0; p.l < shape.l; ++p.l) {
                if (!active(rng)) {
                    continue;
                }
                Site s{p, {}};
                for (int c = 0; c < channels; ++c) {
                    double v = value(rng);
                    s.feature.push_back(v == 0.0 ? 0.5 : v);
                }
                sites.push_back(std::move(s));
            }
        }
    }
    std::shuffle(sites.begin(), sites.end(), rng);
    return SparseTensor3::from_sites(shape, channels, sites);
}

inline ConvWeights random_weights(std::mt19937_64& rng, int c_in, int32_t volume, int c_out, bool with_bias = true) {
    ConvWeights w(c_in, volume, c_out);
    std::uniform_real_distribution<double> value(-1.0, 1.0);
    for (double& v : w.weights) {
        v = value(rng);
    }
    if (with_bias) {
        for (double& v : w.bias) {
            v = value(rng);
        }
    }
    return w;
}

/// Scaled difference with unit floor: |a - b| / max(1, |a|, |b|).
inline double rel_error(double analytic, double numeric) {
    double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / scale;
}

/// Central difference of `f` with respect to `x` (restored afterwards).
template <typename Fn>
double central_difference(double& x, Fn&& f, double step = 1e-5) {
    double saved = x;
    x = saved + step;
    double plus = f();
    x = saved - step;
    double minus = f();
    x = saved;
    return (plus - minus) / (2.0 * step);
}

} // namespace sp3d::testing
