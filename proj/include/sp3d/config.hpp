// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: every module config plus optimizer settings and the
// seed, stored as flat "key = value" lines with dotted section names.
//
//   # comment
//   seed = 7
//   voxel.vx = 0.4
//   backbone.channels = 16,16,16,16
//
// Unknown or repeated keys are rejected with ConfigError.
//
#pragma once

#include "sp3d/augmentation.hpp"
#include "sp3d/backbone.hpp"
#include "sp3d/detection.hpp"
#include "sp3d/loss.hpp"
#include "sp3d/synthetic.hpp"
#include "sp3d/voxelizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sp3d {

struct OptimizerConfig {
    double lr = 0.0002;
    double decay = 0.8;
    int decay_steps = 18570;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int steps = 500;
};

struct DetectConfig {
    double score_threshold = 0.3;
    double nms_threshold = 0.1;
};

struct RunConfig {
    uint64_t seed = 0;
    bool deterministic = true;
    int workers = 1;
    VoxelConfig voxel = VoxelConfig::kitti_vfe();
    /// BV mode only: run the four-stage encoder stack before the backbone
    /// (false feeds the one-channel occupancy directly).
    bool bv_encoder = true;
    /// in_channels and anchors_per_cell are derived, not configured.
    BackboneConfig backbone;
    /// Only sizes, orientations and z_min are configured; range and grid
    /// follow the voxel range and the head resolution.
    AnchorConfig anchors;
    MatchConfig match;
    LossConfig loss;
    DetectConfig detect;
    bool augment_enabled = false;
    AugmentConfig augment;
    SyntheticConfig synthetic;
    OptimizerConfig optim;

    /// Desk-scale setup: 25.2 m x 25.2 m range, 0.4 m voxels, grid
    /// (15, 63, 63), occupancy input and 16-channel levels.
    static RunConfig desk();

    /// Throws ConfigError on inconsistent settings.
    void validate() const;
};

RunConfig parse_config(const std::string& text);
std::string serialize_config(const RunConfig& cfg);
RunConfig load_config(const std::string& path);

/// Replaces the seed with $SP3D_SEED when set; ConfigError if malformed.
void apply_env_overrides(RunConfig& cfg);

/// lr * decay^floor(step / decay_steps).
double learning_rate(const OptimizerConfig& o, long step);

/// Shape and channel count of the tensor entering the backbone.
Shape3 backbone_input_shape(const RunConfig& cfg);
int backbone_input_channels(const RunConfig& cfg);

/// Backbone config with the derived fields filled in.
BackboneConfig model_config(const RunConfig& cfg);

/// Anchor config over the voxel range with one cell per head output pixel.
AnchorConfig anchor_config(const RunConfig& cfg);

} // namespace sp3d
