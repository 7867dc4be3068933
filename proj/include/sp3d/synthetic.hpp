// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic scenes: non-overlapping car-sized boxes standing on a
// ground plane, points on the box surfaces and uniform ground clutter.
//
#pragma once

#include "sp3d/augmentation.hpp"
#include "sp3d/voxelizer.hpp"

#include <cstdint>
#include <string>

namespace sp3d {

struct SyntheticConfig {
    int min_boxes = 1;
    int max_boxes = 3;
    double l_min = 3.2;
    double l_max = 4.6;
    double w_min = 1.5;
    double w_max = 1.9;
    double h_min = 1.4;
    double h_max = 1.7;
    double ground_z = -1.7;
    int points_per_box = 300;
    int clutter_points = 400;
    /// Boxes keep this distance from the range border.
    double margin = 1.0;
    int max_attempts = 200;
};

/// Boxes and points lie inside the x/y range of `range`. Fewer boxes than
/// drawn may be placed if no free spot is found within max_attempts.
Scene make_synthetic_scene(const SyntheticConfig& cfg, const VoxelConfig& range, uint64_t seed,
                           std::string id = "synthetic");

} // namespace sp3d
