// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Timing of the sparse engine on random occupancy, rule-book pair counting
// and BEV rendering.
//
#pragma once

#include "sp3d/config.hpp"
#include "sp3d/detection.hpp"
#include "sp3d/voxelizer.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sp3d {

struct BenchRow {
    double density = 0.0;
    int32_t active_sites = 0;
    size_t rulebook_pairs = 0;
    double rulebook_ms = 0.0; // building the submanifold and k3 s2 rule books of every level
    double gemm_ms = 0.0;     // gather-GEMM-scatter over those rule books
    double forward_ms = 0.0;  // full model forward pass
};

/// One random occupancy tensor per density at the model input shape.
std::vector<BenchRow> bench(const RunConfig& cfg, std::span<const double> densities);

/// Header "density,active_sites,rulebook_pairs,rulebook_ms,gemm_ms,forward_ms"
/// plus one line per row.
std::string bench_csv(std::span<const BenchRow> rows);

struct PairCount {
    int32_t active_sites = 0;
    size_t submanifold_pairs = 0; // k3 submanifold
    size_t standard_pairs = 0;    // k3 s2 standard
};

/// A fixed random 6^3 block pattern repeated `copies` times along l with a
/// pitch of 10 cells and a 2-cell margin, so that no kernel window spans two
/// copies or is clipped by the grid boundary.
PairCount replicated_block_pairs(int copies, uint64_t seed);

/// Binary PPM (P6) of the BEV: points in gray, gt boxes green, detections
/// red, each box with a heading tick. x maps to columns and y to rows (y up).
std::string render_bev_ppm(const PointCloud& pc, std::span<const Box3D> gts, std::span<const Detection> dets,
                           const VoxelConfig& range, double meters_per_pixel = 0.1);

} // namespace sp3d
