// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/eval.hpp"

#include "sp3d/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <numeric>

namespace sp3d {

PrCurve precision_recall(std::span<const std::vector<Detection>> dets, std::span<const std::vector<Box3D>> gts,
                         const IouFn& iou, double iou_threshold, int n_recall_points) {
    if (dets.size() != gts.size()) {
        throw Error("precision_recall: detections and ground truth cover different scene counts");
    }
    if (n_recall_points < 2) {
        throw Error("precision_recall: need at least two recall points");
    }
    struct Ranked {
        size_t scene;
        const Detection* det;
    };
    std::vector<Ranked> ranked;
    PrCurve c;
    for (size_t s = 0; s < dets.size(); ++s) {
        for (const auto& d : dets[s]) {
            ranked.push_back({s, &d});
        }
        c.n_gts += static_cast<int>(gts[s].size());
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Ranked& a, const Ranked& b) { return a.det->score > b.det->score; });
    c.n_dets = static_cast<int>(ranked.size());

    std::vector<std::vector<bool>> used(gts.size());
    for (size_t s = 0; s < gts.size(); ++s) {
        used[s].assign(gts[s].size(), false);
    }
    for (const auto& r : ranked) {
        const auto& g = gts[r.scene];
        int best = -1;
        double best_iou = iou_threshold;
        for (size_t k = 0; k < g.size(); ++k) {
            if (used[r.scene][k]) {
                continue;
            }
            double v = iou(r.det->box, g[k]);
            if (v >= best_iou) {
                best_iou = v;
                best = static_cast<int>(k);
            }
        }
        if (best >= 0) {
            used[r.scene][static_cast<size_t>(best)] = true;
            ++c.n_tp;
        }
        const double n = static_cast<double>(c.precision.size() + 1);
        c.precision.push_back(c.n_tp / n);
        c.recall.push_back(c.n_gts > 0 ? static_cast<double>(c.n_tp) / c.n_gts : 0.0);
    }
    if (c.n_gts == 0) {
        return c;
    }
    double sum = 0.0;
    for (int k = 0; k < n_recall_points; ++k) {
        const double level = static_cast<double>(k) / (n_recall_points - 1);
        double best = 0.0;
        for (size_t i = 0; i < c.precision.size(); ++i) {
            // Small slack so that recall 0.3 reached as 3/10 counts for level 0.3.
            if (c.recall[i] >= level - 1e-12) {
                best = std::max(best, c.precision[i]);
            }
        }
        sum += best;
    }
    c.ap = sum / n_recall_points;
    return c;
}

double average_precision(std::span<const Detection> dets, std::span<const Box3D> gts, const IouFn& iou,
                         double iou_threshold, int n_recall_points) {
    std::vector<std::vector<Detection>> d{std::vector<Detection>(dets.begin(), dets.end())};
    std::vector<std::vector<Box3D>> g{std::vector<Box3D>(gts.begin(), gts.end())};
    return precision_recall(d, g, iou, iou_threshold, n_recall_points).ap;
}

EvalReport evaluate(std::span<const std::vector<Detection>> dets, std::span<const std::vector<Box3D>> gts,
                    std::span<const double> thresholds) {
    auto t0 = std::chrono::steady_clock::now();
    EvalReport r;
    r.n_scenes = static_cast<int>(gts.size());
    for (double t : thresholds) {
        r.entries.push_back({t, "bev", precision_recall(dets, gts, bev_iou, t)});
        r.entries.push_back({t, "3d", precision_recall(dets, gts, iou_3d, t)});
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::string format_report(const EvalReport& r) {
    std::string out = fmt::format("scenes {}\n", r.n_scenes);
    for (const auto& e : r.entries) {
        out += fmt::format("ap_{}@{} = {:.6f}  (dets {}, gts {}, tp {})\n", e.metric, e.iou_threshold, e.curve.ap,
                           e.curve.n_dets, e.curve.n_gts, e.curve.n_tp);
    }
    for (const auto& e : r.entries) {
        out += fmt::format("precision_{}@{} = {:.6f}\n", e.metric, e.iou_threshold, fmt::join(e.curve.precision, " "));
        out += fmt::format("recall_{}@{} = {:.6f}\n", e.metric, e.iou_threshold, fmt::join(e.curve.recall, " "));
    }
    out += fmt::format("eval_seconds = {:.6f}\n", r.seconds);
    return out;
}

} // namespace sp3d
