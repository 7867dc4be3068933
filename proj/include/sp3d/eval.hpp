// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Interpolated average precision with score-ordered greedy matching.
//
#pragma once

#include "sp3d/box.hpp"
#include "sp3d/detection.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace sp3d {

using IouFn = std::function<double(const Box3D&, const Box3D&)>;

struct PrCurve {
    std::vector<double> precision; // after each detection in score order
    std::vector<double> recall;
    double ap = 0.0;
    int n_dets = 0;
    int n_gts = 0;
    int n_tp = 0;
};

/// Detections of all scenes are ranked together by score (ties keep scene
/// and input order). Each detection matches the unmatched gt of its scene
/// with the highest IoU >= threshold. AP averages, over n_recall_points
/// evenly spaced recall levels in [0, 1], the best precision at recall at
/// least that level. AP is 0 when there are no gts.
PrCurve precision_recall(std::span<const std::vector<Detection>> dets, std::span<const std::vector<Box3D>> gts,
                         const IouFn& iou, double iou_threshold, int n_recall_points = 11);

double average_precision(std::span<const Detection> dets, std::span<const Box3D> gts, const IouFn& iou,
                         double iou_threshold, int n_recall_points = 11);

struct EvalReport {
    struct Entry {
        double iou_threshold = 0.0;
        std::string metric; // "bev" or "3d"
        PrCurve curve;
    };
    std::vector<Entry> entries;
    int n_scenes = 0;
    double seconds = 0.0;
};

/// BEV and 3D AP at each threshold.
EvalReport evaluate(std::span<const std::vector<Detection>> dets, std::span<const std::vector<Box3D>> gts,
                    std::span<const double> thresholds);

/// Summary lines followed by per-entry precision/recall arrays.
std::string format_report(const EvalReport& r);

} // namespace sp3d
