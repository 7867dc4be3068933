// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Point cloud to sparse voxel tensor conversion.
//
// Grid axes follow the tensor layout (h, w, l): h indexes world Z, w world Y
// and l world X. Ranges are half-open [min, max).
//
#pragma once

#include "sp3d/params.hpp"
#include "sp3d/sparse_tensor.hpp"

#include <cstdint>
#include <vector>

namespace sp3d {

struct Point {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double intensity = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

using PointCloud = std::vector<Point>;

enum class VoxelMode { BV, VFE };

struct VoxelConfig {
    double x_min = 0.0;
    double x_max = 70.2;
    double y_min = -39.9;
    double y_max = 39.9;
    double z_min = -3.25;
    double z_max = 1.25;
    double vx = 0.2;
    double vy = 0.2;
    double vz = 0.3;
    VoxelMode mode = VoxelMode::VFE;
    int max_points = 35;
    int vfe_mid = 32; // width after the first layer's concat
    int vfe_out = 128;
    int pyramid_depth = 3;
    uint64_t seed = 0;

    static VoxelConfig kitti_bv();
    static VoxelConfig kitti_vfe();

    bool in_range(const Point& p) const;
};

PointCloud crop(const PointCloud& pc, const VoxelConfig& cfg);

/// Per-axis ceil(range / voxel) padded up to 2^depth * d_f + (2^depth - 1)
/// so that `depth` stride-2 k=3 stages divide exactly. Padding goes at the
/// high end.
Shape3 grid_shape(const VoxelConfig& cfg, int pyramid_depth);

/// Voxel coordinate of an in-range point.
Coord3 voxel_of(const Point& p, const VoxelConfig& cfg);

/// Occupied voxels in lexicographic order with the ids of their points in
/// input order. Out-of-range points are skipped.
struct VoxelGroups {
    Shape3 shape;
    std::vector<Coord3> coords;
    std::vector<std::vector<size_t>> members;
};

VoxelGroups group_points(const PointCloud& pc, const VoxelConfig& cfg);

/// One channel, value 1 at every occupied voxel.
SparseTensor3 voxelize_bv(const PointCloud& pc, const VoxelConfig& cfg);

/// Channel widths and shapes of the four BV encoder stages for a given input
/// shape: a submanifold 1->16 conv, then three k=3 s=2 convs to 32, 48, 64.
struct StageShape {
    int channels = 0;
    Shape3 shape;
};

std::vector<StageShape> bv_stack_shapes(Shape3 in_shape);

/// Layers "bv.0" .. "bv.3".
void add_bv_encoder_layers(ParamStore& store);

/// Runs the BV encoder stack, returning each stage output (ReLU after each).
std::vector<SparseTensor3> bv_encoder_stack(const SparseTensor3& t, const ParamStore& store);

/// Layers "vfe.0" (7 -> vfe_mid / 2, concat with its max-pool) and "vfe.1"
/// (vfe_mid -> vfe_out, max-pool only).
void add_vfe_layers(ParamStore& store, const VoxelConfig& cfg);

/// Per-point 7-vectors (x, y, z, intensity, offsets from the centroid) of the
/// kept points of one voxel.
FeatureMatrix vfe_point_features(const PointCloud& pc, const std::vector<size_t>& kept);

/// The two-layer pointwise network with max-pooling for a single voxel.
std::vector<double> vfe_encode_voxel(const FeatureMatrix& points, const ParamStore& store);

/// Voxels with more than max_points points keep a seeded random subset.
SparseTensor3 voxelize_vfe(const PointCloud& pc, const VoxelConfig& cfg, const ParamStore& store);

} // namespace sp3d
