// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Oriented 3D boxes and their bird's-eye-view geometry.
//
#pragma once

#include <array>
#include <numbers>
#include <span>
#include <vector>

namespace sp3d {

/// 7-DOF box in the LiDAR frame. (x, y, z) is the center; l extends along the
/// box heading, w across it, h along world Z. theta is the yaw about Z.
struct Box3D {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double l = 1.0;
    double w = 1.0;
    double h = 1.0;
    double theta = 0.0;

    friend bool operator==(const Box3D&, const Box3D&) = default;
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

/// Maps an angle into [-pi, pi).
double wrap_angle(double theta);

/// Footprint corners in counter-clockwise order.
std::array<Vec2, 4> bev_corners(const Box3D& b);

/// Signed shoelace area (positive for counter-clockwise polygons).
double polygon_area(std::span<const Vec2> poly);

/// Sutherland-Hodgman clipping of a convex polygon by a convex CCW polygon.
std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);

double bev_intersection_area(const Box3D& a, const Box3D& b);

/// Rotated-rectangle IoU in the ground plane. Zero-area boxes give 0.
double bev_iou(const Box3D& a, const Box3D& b);

/// IoU of the axis-aligned rectangles enclosing each footprint.
double bev_iou_axis_aligned(const Box3D& a, const Box3D& b);

/// BEV intersection area times vertical overlap, over the volume union.
double iou_3d(const Box3D& a, const Box3D& b);

/// Footprints share positive area.
bool bev_overlaps(const Box3D& a, const Box3D& b);

/// Point in the oriented footprint (ignores z), with slack `tol` in meters.
bool footprint_contains(const Box3D& b, double x, double y, double tol = 0.0);

/// Point inside the oriented box, with slack `tol` in meters.
bool box_contains(const Box3D& b, double x, double y, double z, double tol = 0.0);

} // namespace sp3d
