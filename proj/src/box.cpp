// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/box.hpp"

#include <algorithm>
#include <cmath>

namespace sp3d {

namespace {

constexpr double kPi = std::numbers::pi;

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

Vec2 segment_line_intersection(const Vec2& p, const Vec2& q, const Vec2& a, const Vec2& b) {
    double d1 = cross(a, b, p);
    double d2 = cross(a, b, q);
    double t = d1 / (d1 - d2);
    return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

double vertical_overlap(const Box3D& a, const Box3D& b) {
    double lo = std::max(a.z - a.h / 2.0, b.z - b.h / 2.0);
    double hi = std::min(a.z + a.h / 2.0, b.z + b.h / 2.0);
    return std::max(0.0, hi - lo);
}

} // namespace

double wrap_angle(double theta) {
    if (theta >= -kPi && theta < kPi) {
        return theta;
    }
    double t = std::fmod(theta + kPi, 2.0 * kPi);
    if (t < 0.0) {
        t += 2.0 * kPi;
    }
    double wrapped = t - kPi;
    return wrapped >= kPi ? wrapped - 2.0 * kPi : wrapped;
}

std::array<Vec2, 4> bev_corners(const Box3D& b) {
    double c = std::cos(b.theta);
    double s = std::sin(b.theta);
    double hl = b.l / 2.0;
    double hw = b.w / 2.0;
    const std::array<Vec2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
    std::array<Vec2, 4> out;
    for (size_t i = 0; i < 4; ++i) {
        out[i] = {b.x + c * local[i].x - s * local[i].y, b.y + s * local[i].x + c * local[i].y};
    }
    return out;
}

double polygon_area(std::span<const Vec2> poly) {
    double sum = 0.0;
    for (size_t i = 0; i < poly.size(); ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % poly.size()];
        sum += p.x * q.y - q.x * p.y;
    }
    return sum / 2.0;
}

std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
    std::vector<Vec2> output(subject.begin(), subject.end());
    for (size_t e = 0; e < clip.size() && !output.empty(); ++e) {
        const Vec2& a = clip[e];
        const Vec2& b = clip[(e + 1) % clip.size()];
        std::vector<Vec2> input;
        input.swap(output);
        for (size_t i = 0; i < input.size(); ++i) {
            const Vec2& p = input[i];
            const Vec2& q = input[(i + 1) % input.size()];
            bool p_in = cross(a, b, p) >= 0.0;
            bool q_in = cross(a, b, q) >= 0.0;
            if (p_in) {
                output.push_back(p);
                if (!q_in) {
                    output.push_back(segment_line_intersection(p, q, a, b));
                }
            } else if (q_in) {
                output.push_back(segment_line_intersection(p, q, a, b));
            }
        }
    }
    return output;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
    // Circumscribed-circle rejection.
    double ra = std::hypot(a.l, a.w) / 2.0;
    double rb = std::hypot(b.l, b.w) / 2.0;
    if (std::hypot(a.x - b.x, a.y - b.y) >= ra + rb) {
        return 0.0;
    }
    auto ca = bev_corners(a);
    auto cb = bev_corners(b);
    auto poly = clip_convex(ca, cb);
    if (poly.size() < 3) {
        return 0.0;
    }
    return std::max(0.0, polygon_area(poly));
}

double bev_iou(const Box3D& a, const Box3D& b) {
    double area_a = a.l * a.w;
    double area_b = b.l * b.w;
    if (!(area_a > 0.0) || !(area_b > 0.0)) {
        return 0.0;
    }
    double inter = bev_intersection_area(a, b);
    return std::clamp(inter / (area_a + area_b - inter), 0.0, 1.0);
}

double bev_iou_axis_aligned(const Box3D& a, const Box3D& b) {
    auto extent = [](const Box3D& box) {
        auto c = bev_corners(box);
        std::array<double, 4> r{c[0].x, c[0].y, c[0].x, c[0].y};
        for (const auto& p : c) {
            r[0] = std::min(r[0], p.x);
            r[1] = std::min(r[1], p.y);
            r[2] = std::max(r[2], p.x);
            r[3] = std::max(r[3], p.y);
        }
        return r;
    };
    auto ea = extent(a);
    auto eb = extent(b);
    double area_a = (ea[2] - ea[0]) * (ea[3] - ea[1]);
    double area_b = (eb[2] - eb[0]) * (eb[3] - eb[1]);
    if (!(area_a > 0.0) || !(area_b > 0.0)) {
        return 0.0;
    }
    double iw = std::max(0.0, std::min(ea[2], eb[2]) - std::max(ea[0], eb[0]));
    double ih = std::max(0.0, std::min(ea[3], eb[3]) - std::max(ea[1], eb[1]));
    double inter = iw * ih;
    return inter / (area_a + area_b - inter);
}

double iou_3d(const Box3D& a, const Box3D& b) {
    double vol_a = a.l * a.w * a.h;
    double vol_b = b.l * b.w * b.h;
    if (!(vol_a > 0.0) || !(vol_b > 0.0)) {
        return 0.0;
    }
    double inter = bev_intersection_area(a, b) * vertical_overlap(a, b);
    return std::clamp(inter / (vol_a + vol_b - inter), 0.0, 1.0);
}

bool bev_overlaps(const Box3D& a, const Box3D& b) { return bev_intersection_area(a, b) > 0.0; }

bool footprint_contains(const Box3D& b, double x, double y, double tol) {
    double c = std::cos(b.theta);
    double s = std::sin(b.theta);
    double dx = x - b.x;
    double dy = y - b.y;
    double u = c * dx + s * dy;
    double v = -s * dx + c * dy;
    return std::abs(u) <= b.l / 2.0 + tol && std::abs(v) <= b.w / 2.0 + tol;
}

bool box_contains(const Box3D& b, double x, double y, double z, double tol) {
    return std::abs(z - b.z) <= b.h / 2.0 + tol && footprint_contains(b, x, y, tol);
}

} // namespace sp3d
