// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Anchors, target assignment, residual box encoding with the pi-periodic
// heading plus direction bit, NMS and detection decoding.
//
#pragma once

#include "sp3d/box.hpp"
#include "sp3d/conv2d.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace sp3d {

struct AnchorSize {
    double l = 1.6;
    double w = 3.9;
    double h = 1.56;
};

struct AnchorConfig {
    double x_min = 0.0;
    double x_max = 70.2;
    double y_min = -39.9;
    double y_max = 39.9;
    double z_min = -3.25;
    int grid_w = 199; // cells along Y
    int grid_l = 175; // cells along X
    std::vector<AnchorSize> sizes{{1.581, 3.513, 1.511}, {1.653, 4.234, 1.546}};
    std::vector<double> orientations{0.0, std::numbers::pi / 2.0};

    int per_cell() const { return static_cast<int>(sizes.size() * orientations.size()); }
    double stride_x() const { return (x_max - x_min) / grid_l; }
    double stride_y() const { return (y_max - y_min) / grid_w; }
};

/// Anchor k of cell (i, j) (i along Y, j along X) has index (i * grid_l + j) * A + k,
/// with k = size_index * orientations + orientation_index.
struct AnchorSet {
    int grid_w = 0;
    int grid_l = 0;
    int per_cell = 0;
    std::vector<Box3D> anchors;

    size_t size() const { return anchors.size(); }
};

/// Anchors centered on BEV cell centers, z center at z_min + h/2.
AnchorSet generate_anchors(const AnchorConfig& cfg);

/// Lloyd k-means on (l, w, h) with seeded initialization, iterated to an
/// assignment fixpoint. Throws if k exceeds the number of boxes.
std::vector<AnchorSize> kmeans_sizes(std::span<const Box3D> boxes, int k, uint64_t seed);

using RegressionTarget = std::array<double, 7>;

struct Heading {
    double angle = 0.0;        // in [0, pi)
    bool dir_positive = false; // original heading > 0
};

/// theta mod pi and the direction label; theta = 0 counts as negative.
Heading normalize_heading(double theta);

/// Residual of `gt` w.r.t. anchor `a`; the gt heading enters as theta mod pi.
/// Throws on non-positive sizes.
RegressionTarget encode_box(const Box3D& gt, const Box3D& a);

/// Exact inverse of encode_box; the heading is restored to [-pi, pi) from
/// the direction bit (pi is added when the bit is negative).
Box3D decode_box(const RegressionTarget& r, const Box3D& a, bool dir_positive);

enum class AnchorLabel : int8_t { Negative = 0, Positive = 1, Ignore = 2 };

struct MatchConfig {
    double pos_iou = 0.7;
    double neg_iou = 0.5;
    bool force_best = true;
    bool rotated = true; // false: axis-aligned footprint IoU
};

struct Assignment {
    std::vector<AnchorLabel> labels;
    std::vector<int32_t> matched_gt; // -1 unless positive
    std::vector<RegressionTarget> targets;
    std::vector<uint8_t> dir_positive;
    int n_pos = 0;
    int n_neg = 0;
    int n_ignore = 0;
};

Assignment assign_targets(const AnchorSet& anchors, std::span<const Box3D> gts, const MatchConfig& cfg = {});

/// Raw head maps: cls has A channels, reg 7A (anchor k uses 7k..7k+6), dir 2A
/// (anchor k uses 2k for the negative and 2k+1 for the positive class).
struct HeadOutput {
    int per_cell = 0;
    Map2D cls;
    Map2D reg;
    Map2D dir;
};

struct Detection {
    Box3D box;
    double score = 0.0;
};

/// Greedy suppression in descending score order by rotated BEV IoU.
std::vector<Detection> nms_bev(std::vector<Detection> dets, double iou_threshold = 0.1);

/// Sigmoid scores above `score_threshold` are decoded with the argmax
/// direction, then suppressed with nms_bev.
std::vector<Detection> decode_detections(const HeadOutput& head, const AnchorSet& anchors,
                                         double score_threshold = 0.3, double nms_threshold = 0.1);

double sigmoid(double z);

/// One detection per line: "x y z l w h theta score", six decimals.
void write_detections(std::ostream& os, std::span<const Detection> dets);
/// Reads the detection format; a missing score column reads as 1.
std::vector<Detection> read_detections(std::istream& is);

} // namespace sp3d
