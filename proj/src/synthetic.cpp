// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/synthetic.hpp"

#include "sp3d/error.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace sp3d {

namespace {

bool fits(const Box3D& b, const VoxelConfig& r, double margin) {
    for (const Vec2& c : bev_corners(b)) {
        if (c.x < r.x_min + margin || c.x > r.x_max - margin || c.y < r.y_min + margin ||
            c.y > r.y_max - margin) {
            return false;
        }
    }
    return true;
}

Point surface_point(const Box3D& b, std::mt19937_64& rng) {
    // Faces weighted by area: +-x (w*h), +-y (l*h), top and bottom (l*w).
    const std::array<double, 3> area{b.w * b.h, b.l * b.h, b.l * b.w};
    std::discrete_distribution<int> face({area[0], area[0], area[1], area[1], area[2], area[2]});
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    int f = face(rng);
    double lx = u(rng) * b.l;
    double ly = u(rng) * b.w;
    double lz = u(rng) * b.h;
    switch (f) {
    case 0: lx = 0.5 * b.l; break;
    case 1: lx = -0.5 * b.l; break;
    case 2: ly = 0.5 * b.w; break;
    case 3: ly = -0.5 * b.w; break;
    case 4: lz = 0.5 * b.h; break;
    default: lz = -0.5 * b.h; break;
    }
    const double c = std::cos(b.theta);
    const double s = std::sin(b.theta);
    std::uniform_real_distribution<double> refl(0.0, 1.0);
    return {b.x + c * lx - s * ly, b.y + s * lx + c * ly, b.z + lz, refl(rng)};
}

} // namespace

Scene make_synthetic_scene(const SyntheticConfig& cfg, const VoxelConfig& range, uint64_t seed, std::string id) {
    if (cfg.min_boxes < 0 || cfg.max_boxes < cfg.min_boxes) {
        throw Error("synthetic scene: invalid box count range");
    }
    std::mt19937_64 rng(seed);
    Scene s;
    s.id = std::move(id);
    std::uniform_int_distribution<int> count(cfg.min_boxes, cfg.max_boxes);
    const int n = count(rng);
    std::uniform_real_distribution<double> ux(range.x_min, range.x_max);
    std::uniform_real_distribution<double> uy(range.y_min, range.y_max);
    std::uniform_real_distribution<double> ul(cfg.l_min, cfg.l_max);
    std::uniform_real_distribution<double> uw(cfg.w_min, cfg.w_max);
    std::uniform_real_distribution<double> uh(cfg.h_min, cfg.h_max);
    std::uniform_real_distribution<double> ut(-std::numbers::pi, std::numbers::pi);
    for (int k = 0; k < n; ++k) {
        for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
            Box3D b;
            b.x = ux(rng);
            b.y = uy(rng);
            b.l = ul(rng);
            b.w = uw(rng);
            b.h = uh(rng);
            b.theta = ut(rng);
            b.z = cfg.ground_z + 0.5 * b.h;
            if (!fits(b, range, cfg.margin)) {
                continue;
            }
            bool clear = true;
            for (const auto& o : s.gt_boxes) {
                clear = clear && !bev_overlaps(b, o);
            }
            if (clear) {
                s.gt_boxes.push_back(b);
                break;
            }
        }
    }
    for (size_t b = 0; b < s.gt_boxes.size(); ++b) {
        for (int i = 0; i < cfg.points_per_box; ++i) {
            s.cloud.push_back(surface_point(s.gt_boxes[b], rng));
            s.owner.push_back(static_cast<int32_t>(b));
        }
    }
    std::uniform_real_distribution<double> refl(0.0, 1.0);
    int placed = 0;
    for (long tries = 0; placed < cfg.clutter_points && tries < 100L * cfg.clutter_points; ++tries) {
        Point p{ux(rng), uy(rng), cfg.ground_z, refl(rng)};
        bool free = true;
        for (const auto& b : s.gt_boxes) {
            free = free && !footprint_contains(b, p.x, p.y, 1e-6);
        }
        if (free) {
            s.cloud.push_back(p);
            s.owner.push_back(-1);
            ++placed;
        }
    }
    return s;
}

} // namespace sp3d
