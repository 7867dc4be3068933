// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Joint point/box augmentation: global rotation and scaling, per-box motion
// with a collision test, and ground-truth insertion from a box database.
//
#pragma once

#include "sp3d/box.hpp"
#include "sp3d/voxelizer.hpp"

#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sp3d {

struct Scene {
    std::string id;
    PointCloud cloud;
    std::vector<Box3D> gt_boxes;
    /// Per-point index of the box the point belongs to, or -1. Either empty
    /// (not tracked) or the same length as `cloud`.
    std::vector<int32_t> owner;
};

inline constexpr double kMembershipTol = 1e-9;

/// Assigns each point to the first box containing it (slack kMembershipTol).
void attach_owners(Scene& s);

Scene global_rotate(Scene s, double theta);
Scene global_scale(Scene s, double factor);

struct MotionConfig {
    double max_rotation = std::numbers::pi / 2.0;
    double translation_std = 1.0;
};

struct BoxMotion {
    double yaw = 0.0;
    double dx = 0.0;
    double dy = 0.0;
    double dz = 0.0;
};

/// Moves box i (and its owned points) rigidly by motions[i]: a yaw about the
/// box center, then a translation. Boxes are visited in order; a move whose
/// footprint would overlap any other box in its current pose is rejected and
/// the box keeps its pose.
Scene per_box_motion(Scene s, std::span<const BoxMotion> motions);

/// Draws one BoxMotion per box (yaw, then dx, dy, dz) and applies them.
Scene per_box_motion(Scene s, std::mt19937_64& rng, const MotionConfig& cfg = {});

struct GtEntry {
    Box3D box;
    PointCloud points;
};

using GtDatabase = std::vector<GtEntry>;

/// One entry per gt box holding the points inside it.
GtDatabase build_gt_database(std::span<const Scene> scenes);

/// Writes manifest.txt ("x y z l w h theta count file" per entry) and one
/// text point file per entry into `dir` (created if missing).
void save_gt_database(const std::string& dir, const GtDatabase& db);
GtDatabase load_gt_database(const std::string& dir);

/// Draws up to n_insert distinct entries; each one whose footprint is clear
/// of all scene boxes replaces the scene points inside its footprint.
Scene gt_increment(Scene s, const GtDatabase& db, int n_insert, std::mt19937_64& rng);

enum class AugmentStep { Increment, Motion, Rotate, Scale };

struct AugmentConfig {
    int n_insert = 5;
    double max_global_rotation = std::numbers::pi / 4.0;
    double scale_min = 0.95;
    double scale_max = 1.05;
    MotionConfig motion;
    std::vector<AugmentStep> order{AugmentStep::Increment, AugmentStep::Motion, AugmentStep::Rotate,
                                   AugmentStep::Scale};
};

std::string_view to_string(AugmentStep step);
AugmentStep augment_step_from_string(std::string_view name);

/// Applies the configured steps in order. Owners are attached first if the
/// scene does not track them.
Scene augment(Scene s, const GtDatabase& db, const AugmentConfig& cfg, std::mt19937_64& rng);

} // namespace sp3d
