// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Seeded randomized verification suites: sparse convolution against the
// dense oracle, conv/deconv adjointness and finite-difference gradients.
// Used by `selfcheck` and the acceptance run.
//
#pragma once

#include "sp3d/sparse_tensor.hpp"
#include "sp3d/weights.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sp3d {

struct CheckReport {
    std::string name;
    int cases = 0;
    int failures = 0;
    double worst = 0.0; // largest observed error measure
    double tolerance = 0.0;

    bool passed() const { return cases > 0 && failures == 0; }
};

/// Each site active with probability `density`; values in U[-1, 1] \ {0}.
SparseTensor3 random_sparse_tensor(std::mt19937_64& rng, Shape3 shape, int channels, double density);
ConvWeights random_conv_weights(std::mt19937_64& rng, int c_in, int32_t volume, int c_out, bool with_bias = true);

/// |a - n| / max(1, |a|, |n|).
double gradient_rel_error(double analytic, double numeric);

struct OracleReport {
    CheckReport values;   // |sparse - dense| at every sparse-active site
    CheckReport sparsity; // submanifold output sites == input sites
};

/// Random Standard and Submanifold cases on grids up to 16^3 with density
/// up to 0.2, k in {1, 2, 3} (odd for submanifold), s in {1, 2} (1 for
/// submanifold), up to 4 channels, alternating ReLU and identity.
OracleReport check_oracle_equivalence(int cases, uint64_t seed, double tol = 1e-9);

/// <conv(x), y> against <x, deconv(y)> with transposed weights, zero bias,
/// identity activation.
CheckReport check_adjointness(int cases, uint64_t seed, double tol = 1e-9);

/// Central differences (step 1e-5) of sum(upstream * output) over every
/// weight, bias and input entry of small sparse convolutions.
CheckReport check_sparse_conv_gradients(int cases, uint64_t seed, double tol = 1e-6);

/// Same for dense 2D convolution and transposed convolution.
CheckReport check_conv2d_gradients(int cases, uint64_t seed, double tol = 1e-6);
CheckReport check_deconv2d_gradients(int cases, uint64_t seed, double tol = 1e-6);

/// Detection loss (focal + smooth-L1 + direction) gradients w.r.t. every
/// head logit on random small scenes.
CheckReport check_loss_gradients(int cases, uint64_t seed, double tol = 1e-6);

/// All suites at fixed seeds. `quick` uses fewer cases.
std::vector<CheckReport> run_selfcheck(bool quick = false);

/// "name cases failures worst tolerance PASS|FAIL"
std::string format_check(const CheckReport& r);

} // namespace sp3d
