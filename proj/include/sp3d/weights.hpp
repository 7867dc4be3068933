// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "sp3d/sparse_tensor.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace sp3d {

enum class ActivationKind { Identity, ReLU };

/// Convolution parameters: logical shape c_in x volume x c_out plus a bias of
/// length c_out. Storage is offset-major so that each per-offset slice
/// W^(i,j,k) is a contiguous row-major c_in x c_out block.
struct ConvWeights {
    int c_in = 0;
    int c_out = 0;
    int32_t volume = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    ConvWeights() = default;
    ConvWeights(int c_in, int32_t volume, int c_out)
        : c_in(c_in), c_out(c_out), volume(volume),
          weights(static_cast<size_t>(c_in) * static_cast<size_t>(volume) * static_cast<size_t>(c_out), 0.0),
          bias(static_cast<size_t>(c_out), 0.0) {}

    double& at(int ci, int32_t off, int co) {
        return weights[(static_cast<size_t>(off) * c_in + ci) * c_out + co];
    }
    double at(int ci, int32_t off, int co) const {
        return weights[(static_cast<size_t>(off) * c_in + ci) * c_out + co];
    }

    Eigen::Map<const FeatureMatrix> slice(int32_t off) const {
        return {weights.data() + static_cast<size_t>(off) * c_in * c_out, c_in, c_out};
    }
    Eigen::Map<FeatureMatrix> slice(int32_t off) {
        return {weights.data() + static_cast<size_t>(off) * c_in * c_out, c_in, c_out};
    }

    size_t parameter_count() const { return weights.size() + bias.size(); }

    /// Zero-valued weights of the same shape.
    ConvWeights zeros_like() const { return ConvWeights(c_in, volume, c_out); }
};

/// He-normal initialization with fan-in c_in * volume; bias set to zero.
void init_he_normal(ConvWeights& w, std::mt19937_64& rng);

inline double activate(double v, ActivationKind act) {
    return act == ActivationKind::ReLU ? (v > 0.0 ? v : 0.0) : v;
}

} // namespace sp3d
