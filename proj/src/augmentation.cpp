// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/augmentation.hpp"

#include "sp3d/error.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace sp3d {

namespace {

namespace fs = std::filesystem;

void check_owner(const Scene& s) {
    if (!s.owner.empty() && s.owner.size() != s.cloud.size()) {
        throw Error(fmt::format("scene '{}': owner tags do not match the point count", s.id));
    }
}

void rotate_xy(double& x, double& y, double c, double sn, double cx, double cy) {
    double dx = x - cx;
    double dy = y - cy;
    x = cx + c * dx - sn * dy;
    y = cy + sn * dx + c * dy;
}

bool collides(const Box3D& b, std::span<const Box3D> boxes, size_t skip) {
    for (size_t j = 0; j < boxes.size(); ++j) {
        if (j != skip && bev_overlaps(b, boxes[j])) {
            return true;
        }
    }
    return false;
}

} // namespace

void attach_owners(Scene& s) {
    s.owner.assign(s.cloud.size(), -1);
    for (size_t i = 0; i < s.cloud.size(); ++i) {
        const Point& p = s.cloud[i];
        for (size_t b = 0; b < s.gt_boxes.size(); ++b) {
            if (box_contains(s.gt_boxes[b], p.x, p.y, p.z, kMembershipTol)) {
                s.owner[i] = static_cast<int32_t>(b);
                break;
            }
        }
    }
}

Scene global_rotate(Scene s, double theta) {
    const double c = std::cos(theta);
    const double sn = std::sin(theta);
    for (auto& p : s.cloud) {
        rotate_xy(p.x, p.y, c, sn, 0.0, 0.0);
    }
    for (auto& b : s.gt_boxes) {
        rotate_xy(b.x, b.y, c, sn, 0.0, 0.0);
        b.theta = wrap_angle(b.theta + theta);
    }
    return s;
}

Scene global_scale(Scene s, double factor) {
    if (!(factor > 0.0)) {
        throw Error("global_scale: factor must be positive");
    }
    for (auto& p : s.cloud) {
        p.x *= factor;
        p.y *= factor;
        p.z *= factor;
    }
    for (auto& b : s.gt_boxes) {
        b.x *= factor;
        b.y *= factor;
        b.z *= factor;
        b.l *= factor;
        b.w *= factor;
        b.h *= factor;
    }
    return s;
}

Scene per_box_motion(Scene s, std::span<const BoxMotion> motions) {
    check_owner(s);
    if (motions.size() != s.gt_boxes.size()) {
        throw Error("per_box_motion: one motion per box required");
    }
    if (s.owner.empty()) {
        attach_owners(s);
    }
    for (size_t b = 0; b < s.gt_boxes.size(); ++b) {
        const BoxMotion& m = motions[b];
        Box3D moved = s.gt_boxes[b];
        moved.x += m.dx;
        moved.y += m.dy;
        moved.z += m.dz;
        moved.theta = wrap_angle(moved.theta + m.yaw);
        if (collides(moved, s.gt_boxes, b)) {
            continue;
        }
        const Box3D& from = s.gt_boxes[b];
        const double c = std::cos(m.yaw);
        const double sn = std::sin(m.yaw);
        for (size_t i = 0; i < s.cloud.size(); ++i) {
            if (s.owner[i] != static_cast<int32_t>(b)) {
                continue;
            }
            Point& p = s.cloud[i];
            rotate_xy(p.x, p.y, c, sn, from.x, from.y);
            p.x += m.dx;
            p.y += m.dy;
            p.z += m.dz;
        }
        s.gt_boxes[b] = moved;
    }
    return s;
}

Scene per_box_motion(Scene s, std::mt19937_64& rng, const MotionConfig& cfg) {
    std::uniform_real_distribution<double> yaw(-cfg.max_rotation, cfg.max_rotation);
    std::normal_distribution<double> shift(0.0, cfg.translation_std);
    std::vector<BoxMotion> motions(s.gt_boxes.size());
    for (auto& m : motions) {
        m.yaw = yaw(rng);
        m.dx = shift(rng);
        m.dy = shift(rng);
        m.dz = shift(rng);
    }
    return per_box_motion(std::move(s), motions);
}

GtDatabase build_gt_database(std::span<const Scene> scenes) {
    GtDatabase db;
    for (const auto& s : scenes) {
        for (const auto& b : s.gt_boxes) {
            GtEntry e{b, {}};
            for (const auto& p : s.cloud) {
                if (box_contains(b, p.x, p.y, p.z, kMembershipTol)) {
                    e.points.push_back(p);
                }
            }
            db.push_back(std::move(e));
        }
    }
    return db;
}

void save_gt_database(const std::string& dir, const GtDatabase& db) {
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) {
        throw Error(fmt::format("cannot write gt database manifest in '{}'", dir));
    }
    for (size_t i = 0; i < db.size(); ++i) {
        const auto& e = db[i];
        std::string file = fmt::format("entry_{:06d}.txt", i);
        fmt::print(manifest, "{} {} {} {} {} {} {} {} {}\n", e.box.x, e.box.y, e.box.z, e.box.l, e.box.w, e.box.h,
                   e.box.theta, e.points.size(), file);
        std::ofstream pts(fs::path(dir) / file);
        for (const auto& p : e.points) {
            fmt::print(pts, "{} {} {} {}\n", p.x, p.y, p.z, p.intensity);
        }
        if (!pts) {
            throw Error(fmt::format("cannot write '{}'", file));
        }
    }
}

GtDatabase load_gt_database(const std::string& dir) {
    std::ifstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) {
        throw Error(fmt::format("no gt database manifest in '{}'", dir));
    }
    GtDatabase db;
    std::string line;
    int line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        GtEntry e;
        size_t count = 0;
        std::string file;
        if (!(ss >> e.box.x >> e.box.y >> e.box.z >> e.box.l >> e.box.w >> e.box.h >> e.box.theta >> count >> file)) {
            throw Error(fmt::format("gt database manifest line {}: malformed", line_no));
        }
        std::ifstream pts(fs::path(dir) / file);
        Point p;
        while (pts >> p.x >> p.y >> p.z >> p.intensity) {
            e.points.push_back(p);
        }
        if (e.points.size() != count) {
            throw Error(fmt::format("gt database entry '{}': expected {} points, read {}", file, count,
                                    e.points.size()));
        }
        db.push_back(std::move(e));
    }
    return db;
}

Scene gt_increment(Scene s, const GtDatabase& db, int n_insert, std::mt19937_64& rng) {
    check_owner(s);
    if (db.empty() || n_insert <= 0) {
        return s;
    }
    if (s.owner.empty()) {
        attach_owners(s);
    }
    std::vector<size_t> order(db.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(std::min(order.size(), static_cast<size_t>(n_insert)));
    for (size_t idx : order) {
        const GtEntry& e = db[idx];
        if (collides(e.box, s.gt_boxes, s.gt_boxes.size())) {
            continue;
        }
        PointCloud kept;
        std::vector<int32_t> kept_owner;
        for (size_t i = 0; i < s.cloud.size(); ++i) {
            if (!footprint_contains(e.box, s.cloud[i].x, s.cloud[i].y)) {
                kept.push_back(s.cloud[i]);
                kept_owner.push_back(s.owner[i]);
            }
        }
        const auto new_id = static_cast<int32_t>(s.gt_boxes.size());
        s.gt_boxes.push_back(e.box);
        for (const auto& p : e.points) {
            kept.push_back(p);
            kept_owner.push_back(new_id);
        }
        s.cloud = std::move(kept);
        s.owner = std::move(kept_owner);
    }
    return s;
}

std::string_view to_string(AugmentStep step) {
    switch (step) {
    case AugmentStep::Increment:
        return "increment";
    case AugmentStep::Motion:
        return "motion";
    case AugmentStep::Rotate:
        return "rotate";
    case AugmentStep::Scale:
        return "scale";
    }
    return "?";
}

AugmentStep augment_step_from_string(std::string_view name) {
    for (auto s : {AugmentStep::Increment, AugmentStep::Motion, AugmentStep::Rotate, AugmentStep::Scale}) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw ConfigError(fmt::format("unknown augmentation step '{}'", name));
}

Scene augment(Scene s, const GtDatabase& db, const AugmentConfig& cfg, std::mt19937_64& rng) {
    check_owner(s);
    if (s.owner.empty()) {
        attach_owners(s);
    }
    for (AugmentStep step : cfg.order) {
        switch (step) {
        case AugmentStep::Increment:
            s = gt_increment(std::move(s), db, cfg.n_insert, rng);
            break;
        case AugmentStep::Motion:
            s = per_box_motion(std::move(s), rng, cfg.motion);
            break;
        case AugmentStep::Rotate: {
            std::uniform_real_distribution<double> u(-cfg.max_global_rotation, cfg.max_global_rotation);
            s = global_rotate(std::move(s), u(rng));
            break;
        }
        case AugmentStep::Scale: {
            std::uniform_real_distribution<double> u(cfg.scale_min, cfg.scale_max);
            s = global_scale(std::move(s), u(rng));
            break;
        }
        }
    }
    return s;
}

} // namespace sp3d
