// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/box.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace sp3d {
namespace {

constexpr double kPi = std::numbers::pi;

// Point-sampling estimate of the footprint IoU on a fine lattice.
double sampled_bev_iou(const Box3D& a, const Box3D& b, int n) {
    double ra = std::hypot(a.l, a.w) / 2.0;
    double rb = std::hypot(b.l, b.w) / 2.0;
    double x0 = std::min(a.x - ra, b.x - rb);
    double x1 = std::max(a.x + ra, b.x + rb);
    double y0 = std::min(a.y - ra, b.y - rb);
    double y1 = std::max(a.y + ra, b.y + rb);
    long inter = 0;
    long uni = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double x = x0 + (i + 0.5) * (x1 - x0) / n;
            double y = y0 + (j + 0.5) * (y1 - y0) / n;
            bool in_a = footprint_contains(a, x, y);
            bool in_b = footprint_contains(b, x, y);
            inter += in_a && in_b;
            uni += in_a || in_b;
        }
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

TEST(WrapAngle, MapsIntoHalfOpenRange) {
    EXPECT_DOUBLE_EQ(wrap_angle(0.0), 0.0);
    EXPECT_NEAR(wrap_angle(kPi), -kPi, 1e-15);
    EXPECT_NEAR(wrap_angle(-kPi), -kPi, 1e-15);
    EXPECT_NEAR(wrap_angle(3.0 * kPi / 2.0), -kPi / 2.0, 1e-12);
    EXPECT_NEAR(wrap_angle(-5.0 * kPi / 2.0), -kPi / 2.0, 1e-12);
}

TEST(BevCorners, CounterClockwiseWithPositiveArea) {
    Box3D b{1.0, 2.0, 0.0, 4.0, 2.0, 1.5, 0.3};
    auto c = bev_corners(b);
    EXPECT_NEAR(polygon_area(c), 8.0, 1e-12);
    Box3D r{0.0, 0.0, 0.0, 2.0, 1.0, 1.0, kPi / 2.0};
    auto cr = bev_corners(r);
    // Length now runs along Y.
    EXPECT_NEAR(std::abs(cr[0].y - cr[1].y), 2.0, 1e-12);
}

TEST(BevIou, IdenticalIsOne) {
    Box3D b{3.0, -1.0, 0.5, 3.9, 1.6, 1.56, 0.7};
    EXPECT_NEAR(bev_iou(b, b), 1.0, 1e-12);
}

TEST(BevIou, DisjointIsZero) {
    Box3D a{0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0};
    Box3D b{10.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.4};
    EXPECT_EQ(bev_iou(a, b), 0.0);
    Box3D touching{2.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0};
    EXPECT_NEAR(bev_iou(a, touching), 0.0, 1e-12);
}

TEST(BevIou, OffsetSquaresGiveOneThird) {
    Box3D a{0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0};
    Box3D b{1.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0};
    EXPECT_NEAR(bev_iou(a, b), 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(bev_iou_axis_aligned(a, b), 1.0 / 3.0, 1e-12);
}

TEST(BevIou, DegenerateBoxIsZero) {
    Box3D a{0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0};
    Box3D flat{0.0, 0.0, 0.0, 0.0, 2.0, 1.0, 0.0};
    EXPECT_EQ(bev_iou(a, flat), 0.0);
}

TEST(BevIou, HalfTurnInvariant) {
    Box3D a{0.3, 0.1, 0.0, 4.0, 1.7, 1.5, 0.2};
    Box3D b{0.9, -0.4, 0.0, 3.5, 1.6, 1.5, 1.1};
    Box3D a_flipped = a;
    a_flipped.theta += kPi;
    EXPECT_NEAR(bev_iou(a, b), bev_iou(a_flipped, b), 1e-12);
    EXPECT_NEAR(bev_iou(a, b), bev_iou(b, a), 1e-12);
}

TEST(BevIou, RotatedSquareInsideSquare) {
    // A square rotated by 45 degrees with its corners on the edge midpoints
    // covers exactly half of the outer square.
    Box3D outer{0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0};
    Box3D inner{0.0, 0.0, 0.0, std::sqrt(2.0), std::sqrt(2.0), 1.0, kPi / 4.0};
    EXPECT_NEAR(bev_intersection_area(outer, inner), 2.0, 1e-12);
    EXPECT_NEAR(bev_iou(outer, inner), 0.5, 1e-12);
}

TEST(BevIou, MatchesPointSamplingOnRandomPairs) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> pos(-1.5, 1.5);
    std::uniform_real_distribution<double> size(0.5, 4.0);
    std::uniform_real_distribution<double> yaw(-kPi, kPi);
    for (int t = 0; t < 20; ++t) {
        Box3D a{pos(rng), pos(rng), 0.0, size(rng), size(rng), 1.0, yaw(rng)};
        Box3D b{pos(rng), pos(rng), 0.0, size(rng), size(rng), 1.0, yaw(rng)};
        EXPECT_NEAR(bev_iou(a, b), sampled_bev_iou(a, b, 600), 5e-3) << "pair " << t;
    }
}

TEST(Iou3d, IdenticalNoOverlapAndStackedCubes) {
    Box3D a{0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0};
    EXPECT_NEAR(iou_3d(a, a), 1.0, 1e-12);
    Box3D above{0.0, 0.0, 2.0, 1.0, 1.0, 1.0, 0.0};
    EXPECT_EQ(iou_3d(a, above), 0.0);
    Box3D half{0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 0.0};
    EXPECT_NEAR(iou_3d(a, half), 1.0 / 3.0, 1e-12);
}

TEST(Contains, OrientedFootprintAndHeight) {
    Box3D b{0.0, 0.0, 0.0, 4.0, 1.0, 2.0, kPi / 2.0};
    EXPECT_TRUE(footprint_contains(b, 0.0, 1.9));
    EXPECT_FALSE(footprint_contains(b, 1.9, 0.0));
    EXPECT_TRUE(box_contains(b, 0.0, 1.0, 0.9));
    EXPECT_FALSE(box_contains(b, 0.0, 1.0, 1.1));
    EXPECT_TRUE(box_contains(b, 0.0, 1.0, 1.1, 0.2));
}

TEST(Overlaps, SharedAreaOnly) {
    Box3D a{0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0};
    Box3D b{1.5, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0};
    Box3D c{2.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0};
    EXPECT_TRUE(bev_overlaps(a, b));
    EXPECT_FALSE(bev_overlaps(a, c));
}

} // namespace
} // namespace sp3d
