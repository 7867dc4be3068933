// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/detection.hpp"

#include "sp3d/error.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace sp3d {

namespace {

constexpr double kPi = std::numbers::pi;

double mod_pi(double angle) {
    double m = angle - kPi * std::floor(angle / kPi);
    return m >= kPi ? m - kPi : m;
}

} // namespace

AnchorSet generate_anchors(const AnchorConfig& cfg) {
    if (cfg.grid_w <= 0 || cfg.grid_l <= 0 || cfg.sizes.empty() || cfg.orientations.empty()) {
        throw Error("generate_anchors: empty grid or anchor list");
    }
    if (!(cfg.x_max > cfg.x_min) || !(cfg.y_max > cfg.y_min)) {
        throw Error("generate_anchors: invalid range");
    }
    AnchorSet set;
    set.grid_w = cfg.grid_w;
    set.grid_l = cfg.grid_l;
    set.per_cell = cfg.per_cell();
    set.anchors.reserve(static_cast<size_t>(cfg.grid_w) * cfg.grid_l * set.per_cell);
    const double sx = cfg.stride_x();
    const double sy = cfg.stride_y();
    for (int i = 0; i < cfg.grid_w; ++i) {
        for (int j = 0; j < cfg.grid_l; ++j) {
            double cx = cfg.x_min + (j + 0.5) * sx;
            double cy = cfg.y_min + (i + 0.5) * sy;
            for (const auto& size : cfg.sizes) {
                for (double yaw : cfg.orientations) {
                    set.anchors.push_back({cx, cy, cfg.z_min + size.h / 2.0, size.l, size.w, size.h, yaw});
                }
            }
        }
    }
    return set;
}

std::vector<AnchorSize> kmeans_sizes(std::span<const Box3D> boxes, int k, uint64_t seed) {
    if (k <= 0 || static_cast<size_t>(k) > boxes.size()) {
        throw Error(fmt::format("kmeans_sizes: cannot form {} clusters from {} boxes", k, boxes.size()));
    }
    std::vector<size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<AnchorSize> centers;
    for (int c = 0; c < k; ++c) {
        const Box3D& b = boxes[order[static_cast<size_t>(c)]];
        centers.push_back({b.l, b.w, b.h});
    }
    std::vector<int> assign(boxes.size(), -1);
    for (int iter = 0; iter < 1000; ++iter) {
        bool changed = false;
        for (size_t i = 0; i < boxes.size(); ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const auto& ctr = centers[static_cast<size_t>(c)];
                double d = std::pow(boxes[i].l - ctr.l, 2) + std::pow(boxes[i].w - ctr.w, 2) +
                           std::pow(boxes[i].h - ctr.h, 2);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
        for (int c = 0; c < k; ++c) {
            AnchorSize sum{0.0, 0.0, 0.0};
            int count = 0;
            for (size_t i = 0; i < boxes.size(); ++i) {
                if (assign[i] == c) {
                    sum.l += boxes[i].l;
                    sum.w += boxes[i].w;
                    sum.h += boxes[i].h;
                    ++count;
                }
            }
            // An emptied cluster keeps its previous center.
            if (count > 0) {
                centers[static_cast<size_t>(c)] = {sum.l / count, sum.w / count, sum.h / count};
            }
        }
    }
    return centers;
}

Heading normalize_heading(double theta) {
    double t = wrap_angle(theta);
    return {mod_pi(t), t > 0.0};
}

RegressionTarget encode_box(const Box3D& gt, const Box3D& a) {
    if (!(gt.l > 0 && gt.w > 0 && gt.h > 0 && a.l > 0 && a.w > 0 && a.h > 0)) {
        throw Error("encode_box: box sizes must be positive");
    }
    const double diag = std::sqrt(a.l * a.l + a.w * a.w);
    return {(gt.x - a.x) / diag,
            (gt.y - a.y) / diag,
            (gt.z - a.z) / a.h,
            std::log(gt.l / a.l),
            std::log(gt.w / a.w),
            std::log(gt.h / a.h),
            normalize_heading(gt.theta).angle - a.theta};
}

Box3D decode_box(const RegressionTarget& r, const Box3D& a, bool dir_positive) {
    const double diag = std::sqrt(a.l * a.l + a.w * a.w);
    double heading = mod_pi(a.theta + r[6]);
    if (!dir_positive) {
        heading += kPi;
    }
    return {a.x + r[0] * diag,
            a.y + r[1] * diag,
            a.z + r[2] * a.h,
            a.l * std::exp(r[3]),
            a.w * std::exp(r[4]),
            a.h * std::exp(r[5]),
            wrap_angle(heading)};
}

Assignment assign_targets(const AnchorSet& anchors, std::span<const Box3D> gts, const MatchConfig& cfg) {
    const size_t n = anchors.size();
    Assignment out;
    out.labels.assign(n, AnchorLabel::Negative);
    out.matched_gt.assign(n, -1);
    out.targets.assign(n, RegressionTarget{});
    out.dir_positive.assign(n, 0);

    std::vector<double> best_iou(n, 0.0);
    std::vector<int32_t> best_gt(n, -1);
    std::vector<double> gt_best_iou(gts.size(), 0.0);
    std::vector<int64_t> gt_best_anchor(gts.size(), -1);
    for (size_t a = 0; a < n; ++a) {
        for (size_t g = 0; g < gts.size(); ++g) {
            double iou = cfg.rotated ? bev_iou(anchors.anchors[a], gts[g]) : bev_iou_axis_aligned(anchors.anchors[a], gts[g]);
            if (iou > best_iou[a]) {
                best_iou[a] = iou;
                best_gt[a] = static_cast<int32_t>(g);
            }
            if (iou > gt_best_iou[g]) {
                gt_best_iou[g] = iou;
                gt_best_anchor[g] = static_cast<int64_t>(a);
            }
        }
    }
    for (size_t a = 0; a < n; ++a) {
        if (best_gt[a] >= 0 && best_iou[a] >= cfg.pos_iou) {
            out.labels[a] = AnchorLabel::Positive;
            out.matched_gt[a] = best_gt[a];
        } else if (best_iou[a] >= cfg.neg_iou) {
            out.labels[a] = AnchorLabel::Ignore;
        }
    }
    if (cfg.force_best) {
        for (size_t g = 0; g < gts.size(); ++g) {
            int64_t a = gt_best_anchor[g];
            if (a >= 0 && out.labels[static_cast<size_t>(a)] != AnchorLabel::Positive) {
                out.labels[static_cast<size_t>(a)] = AnchorLabel::Positive;
                out.matched_gt[static_cast<size_t>(a)] = static_cast<int32_t>(g);
            }
        }
    }
    for (size_t a = 0; a < n; ++a) {
        switch (out.labels[a]) {
        case AnchorLabel::Positive: {
            const Box3D& gt = gts[static_cast<size_t>(out.matched_gt[a])];
            out.targets[a] = encode_box(gt, anchors.anchors[a]);
            out.dir_positive[a] = normalize_heading(gt.theta).dir_positive ? 1 : 0;
            ++out.n_pos;
            break;
        }
        case AnchorLabel::Negative:
            ++out.n_neg;
            break;
        case AnchorLabel::Ignore:
            ++out.n_ignore;
            break;
        }
    }
    return out;
}

std::vector<Detection> nms_bev(std::vector<Detection> dets, double iou_threshold) {
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
    std::vector<Detection> kept;
    for (const auto& d : dets) {
        bool suppressed = false;
        for (const auto& k : kept) {
            if (bev_iou(d.box, k.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            kept.push_back(d);
        }
    }
    return kept;
}

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<Detection> decode_detections(const HeadOutput& head, const AnchorSet& anchors, double score_threshold,
                                         double nms_threshold) {
    const int A = head.per_cell;
    if (head.cls.channels != A || head.reg.channels != 7 * A || head.dir.channels != 2 * A ||
        head.cls.w != anchors.grid_w || head.cls.l != anchors.grid_l || A != anchors.per_cell) {
        throw Error("decode_detections: head maps do not match the anchor grid");
    }
    std::vector<Detection> dets;
    for (int i = 0; i < anchors.grid_w; ++i) {
        for (int j = 0; j < anchors.grid_l; ++j) {
            for (int k = 0; k < A; ++k) {
                double score = sigmoid(head.cls.at(k, i, j));
                if (!(score > score_threshold)) {
                    continue;
                }
                RegressionTarget r;
                for (int c = 0; c < 7; ++c) {
                    r[static_cast<size_t>(c)] = head.reg.at(7 * k + c, i, j);
                }
                bool positive = head.dir.at(2 * k + 1, i, j) > head.dir.at(2 * k, i, j);
                const Box3D& anchor = anchors.anchors[(static_cast<size_t>(i) * anchors.grid_l + j) * A + k];
                dets.push_back({decode_box(r, anchor, positive), score});
            }
        }
    }
    return nms_bev(std::move(dets), nms_threshold);
}

void write_detections(std::ostream& os, std::span<const Detection> dets) {
    for (const auto& d : dets) {
        const Box3D& b = d.box;
        fmt::print(os, "{:.6f} {:.6f} {:.6f} {:.6f} {:.6f} {:.6f} {:.6f} {:.6f}\n", b.x, b.y, b.z, b.l, b.w, b.h, b.theta,
                   d.score);
    }
}

std::vector<Detection> read_detections(std::istream& is) {
    std::vector<Detection> dets;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream ss(line);
        Detection d;
        Box3D& b = d.box;
        if (!(ss >> b.x >> b.y >> b.z >> b.l >> b.w >> b.h >> b.theta)) {
            throw Error(fmt::format("detection line {}: expected 7 or 8 numbers", line_no));
        }
        if (!(ss >> d.score)) {
            d.score = 1.0;
        }
        dets.push_back(d);
    }
    return dets;
}

} // namespace sp3d
