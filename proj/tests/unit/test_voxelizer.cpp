// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/error.hpp"
#include "sp3d/voxelizer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace sp3d {
namespace {

PointCloud random_cloud(std::mt19937_64& rng, size_t n, double margin) {
    std::uniform_real_distribution<double> x(-margin, 70.2 + margin);
    std::uniform_real_distribution<double> y(-39.9 - margin, 39.9 + margin);
    std::uniform_real_distribution<double> z(-3.25 - margin, 1.25 + margin);
    std::uniform_real_distribution<double> r(0.0, 1.0);
    PointCloud pc;
    for (size_t i = 0; i < n; ++i) {
        pc.push_back({x(rng), y(rng), z(rng), r(rng)});
    }
    return pc;
}

bool divides_through(int d, int depth) {
    for (int s = 0; s < depth; ++s) {
        if (d < 3 || (d - 3) % 2 != 0) {
            return false;
        }
        d = (d - 3) / 2 + 1;
    }
    return true;
}

TEST(Crop, HalfOpenRange) {
    VoxelConfig cfg;
    PointCloud pc{{0.0, 0.0, 0.0, 0.5}, {70.2, 0.0, 0.0, 0.5}, {0.0, -39.9, -3.25, 0.1}, {1.0, 39.9, 0.0, 0.1}};
    auto out = crop(pc, cfg);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0], pc[0]);
    EXPECT_EQ(out[1], pc[2]);
}

TEST(Crop, MatchesBruteForceCount) {
    std::mt19937_64 rng(1);
    VoxelConfig cfg;
    auto pc = random_cloud(rng, 5000, 5.0);
    size_t expected = 0;
    for (const auto& p : pc) {
        expected += p.x >= 0.0 && p.x < 70.2 && p.y >= -39.9 && p.y < 39.9 && p.z >= -3.25 && p.z < 1.25;
    }
    EXPECT_EQ(crop(pc, cfg).size(), expected);
}

TEST(GridShape, BinaryVoxelPadding) {
    auto cfg = VoxelConfig::kitti_bv();
    EXPECT_EQ(grid_shape(cfg, 0), (Shape3{120, 3192, 2808}));
    EXPECT_EQ(grid_shape(cfg, 3), (Shape3{127, 3199, 2815}));
}

TEST(GridShape, VfeDims) {
    auto cfg = VoxelConfig::kitti_vfe();
    EXPECT_EQ(grid_shape(cfg, 0), (Shape3{15, 399, 351}));
    EXPECT_EQ(grid_shape(cfg, 3), (Shape3{15, 399, 351}));
}

TEST(GridShape, AlwaysDividesThrough) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> extent(0.3, 40.0);
    std::uniform_real_distribution<double> vox(0.05, 0.5);
    for (int t = 0; t < 200; ++t) {
        VoxelConfig cfg;
        cfg.x_max = extent(rng);
        cfg.y_max = cfg.y_min + extent(rng);
        cfg.z_max = cfg.z_min + extent(rng) / 5.0;
        cfg.vx = vox(rng);
        cfg.vy = vox(rng);
        cfg.vz = vox(rng);
        for (int depth = 1; depth <= 4; ++depth) {
            Shape3 raw = grid_shape(cfg, 0);
            Shape3 s = grid_shape(cfg, depth);
            for (int a = 0; a < 3; ++a) {
                EXPECT_TRUE(divides_through(s[a], depth)) << s[a] << " depth " << depth;
                EXPECT_GE(s[a], raw[a]);
                // Smallest such size.
                EXPECT_TRUE(s[a] - (1 << depth) < raw[a] || !divides_through(s[a] - (1 << depth), depth));
            }
        }
    }
}

TEST(GridShape, InvalidConfigThrows) {
    VoxelConfig cfg;
    cfg.vx = 0.0;
    EXPECT_THROW(grid_shape(cfg, 3), ConfigError);
}

TEST(VoxelizeBv, EmptyCloud) {
    auto t = voxelize_bv({}, VoxelConfig::kitti_bv());
    EXPECT_EQ(t.active_count(), 0);
    EXPECT_EQ(t.channels(), 1);
    EXPECT_EQ(t.shape(), (Shape3{127, 3199, 2815}));
}

TEST(VoxelizeBv, FloorIndexing) {
    auto t = voxelize_bv({{0.03, -39.9, -3.25, 0.2}}, VoxelConfig::kitti_bv());
    ASSERT_EQ(t.active_count(), 1);
    EXPECT_EQ(t.index().key(0), (Coord3{0, 0, 1}));
    EXPECT_EQ(t.features()(0, 0), 1.0);
}

TEST(VoxelizeBv, BinaryCollapse) {
    auto t = voxelize_bv({{1.001, 2.001, 0.001, 0.2}, {1.002, 2.002, 0.002, 0.9}}, VoxelConfig::kitti_bv());
    ASSERT_EQ(t.active_count(), 1);
    EXPECT_EQ(t.features()(0, 0), 1.0);
}

TEST(VoxelizeBv, PartitionAndDistinctCount) {
    std::mt19937_64 rng(5);
    VoxelConfig cfg;
    auto pc = random_cloud(rng, 20000, 2.0);
    auto cropped = crop(pc, cfg);
    auto groups = group_points(pc, cfg);
    size_t total = 0;
    std::set<size_t> seen;
    for (size_t v = 0; v < groups.coords.size(); ++v) {
        total += groups.members[v].size();
        for (size_t id : groups.members[v]) {
            EXPECT_TRUE(seen.insert(id).second);
            EXPECT_EQ(voxel_of(pc[id], cfg), groups.coords[v]);
        }
    }
    EXPECT_EQ(total, cropped.size());
    std::set<Coord3> distinct;
    for (const auto& p : cropped) {
        distinct.insert({static_cast<int>(std::floor((p.z + 3.25) / 0.3)), static_cast<int>(std::floor((p.y + 39.9) / 0.2)),
                         static_cast<int>(std::floor(p.x / 0.2))});
    }
    auto t = voxelize_bv(pc, cfg);
    EXPECT_EQ(static_cast<size_t>(t.active_count()), distinct.size());
    EXPECT_TRUE((t.features().array() == 1.0).all());
}

TEST(BvStack, FullScaleStageShapes) {
    auto stages = bv_stack_shapes({127, 3199, 2815});
    ASSERT_EQ(stages.size(), 4u);
    EXPECT_EQ(stages[0].channels, 16);
    EXPECT_EQ(stages[0].shape, (Shape3{127, 3199, 2815}));
    EXPECT_EQ(stages[1].channels, 32);
    EXPECT_EQ(stages[1].shape, (Shape3{63, 1599, 1407}));
    EXPECT_EQ(stages[2].channels, 48);
    EXPECT_EQ(stages[2].shape, (Shape3{31, 799, 703}));
    EXPECT_EQ(stages[3].channels, 64);
    EXPECT_EQ(stages[3].shape, (Shape3{15, 399, 351}));
}

TEST(BvStack, DeskScaleShapes) {
    auto stages = bv_stack_shapes({31, 63, 63});
    EXPECT_EQ(stages[1].shape, (Shape3{15, 31, 31}));
    EXPECT_EQ(stages[2].shape, (Shape3{7, 15, 15}));
    EXPECT_EQ(stages[3].shape, (Shape3{3, 7, 7}));
    EXPECT_THROW(bv_stack_shapes({30, 63, 63}), Error);
}

TEST(BvStack, ForwardShapesAndEmptyInput) {
    ParamStore store;
    add_bv_encoder_layers(store);
    std::mt19937_64 rng(2);
    store.init_he(rng);
    VoxelConfig cfg;
    cfg.x_max = 12.0;
    cfg.y_min = -6.0;
    cfg.y_max = 6.0;
    cfg.vx = cfg.vy = 0.4;
    auto empty = voxelize_bv({}, cfg);
    auto outs = bv_encoder_stack(empty, store);
    ASSERT_EQ(outs.size(), 4u);
    for (const auto& o : outs) {
        EXPECT_EQ(o.active_count(), 0);
    }
    PointCloud pc{{3.0, 1.0, -1.0, 0.5}, {7.0, -2.0, 0.0, 0.5}};
    auto t = voxelize_bv(pc, cfg);
    outs = bv_encoder_stack(t, store);
    auto expected = bv_stack_shapes(t.shape());
    for (size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(outs[i].shape(), expected[i].shape);
        EXPECT_EQ(outs[i].channels(), expected[i].channels);
    }
    EXPECT_TRUE(outs[0].same_sites(t));
}

ParamStore vfe_store(uint64_t seed) {
    ParamStore store;
    add_vfe_layers(store, VoxelConfig{});
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.5);
    for (auto& l : store.layers()) {
        for (double& v : l.w.weights) {
            v = n(rng);
        }
        for (double& v : l.w.bias) {
            v = n(rng);
        }
    }
    return store;
}

// Straight-line recomputation of one voxel's feature, index loops only.
std::vector<double> reference_vfe(const std::vector<Point>& pts, const ParamStore& store) {
    const ConvWeights& w0 = store.get("vfe.0").w;
    const ConvWeights& w1 = store.get("vfe.1").w;
    double c[3] = {0, 0, 0};
    for (const auto& p : pts) {
        c[0] += p.x / pts.size();
        c[1] += p.y / pts.size();
        c[2] += p.z / pts.size();
    }
    std::vector<std::vector<double>> h(pts.size(), std::vector<double>(16));
    for (size_t i = 0; i < pts.size(); ++i) {
        double in[7] = {pts[i].x, pts[i].y, pts[i].z, pts[i].intensity, pts[i].x - c[0], pts[i].y - c[1],
                        pts[i].z - c[2]};
        for (int o = 0; o < 16; ++o) {
            double acc = w0.bias[o];
            for (int k = 0; k < 7; ++k) {
                acc += in[k] * w0.at(k, 0, o);
            }
            h[i][o] = std::max(acc, 0.0);
        }
    }
    std::vector<double> pool(16, -1e300);
    for (const auto& row : h) {
        for (int o = 0; o < 16; ++o) {
            pool[o] = std::max(pool[o], row[o]);
        }
    }
    std::vector<double> out(128, -1e300);
    for (const auto& row : h) {
        for (int o = 0; o < 128; ++o) {
            double acc = w1.bias[o];
            for (int k = 0; k < 16; ++k) {
                acc += row[k] * w1.at(k, 0, o) + pool[k] * w1.at(16 + k, 0, o);
            }
            out[o] = std::max(out[o], std::max(acc, 0.0));
        }
    }
    return out;
}

TEST(Vfe, SinglePointHasZeroOffsets) {
    PointCloud pc{{1.0, 2.0, -1.0, 0.4}};
    auto f = vfe_point_features(pc, {0});
    EXPECT_EQ(f(0, 4), 0.0);
    EXPECT_EQ(f(0, 5), 0.0);
    EXPECT_EQ(f(0, 6), 0.0);
    EXPECT_EQ(f(0, 3), 0.4);
}

TEST(Vfe, IdenticalPointsPoolToPointwise) {
    auto store = vfe_store(4);
    PointCloud pc{{1.0, 2.0, -1.0, 0.4}, {1.0, 2.0, -1.0, 0.4}};
    auto f = vfe_point_features(pc, {0, 1});
    EXPECT_EQ(f.row(0), f.row(1));
    auto one = vfe_encode_voxel(vfe_point_features(pc, {0}), store);
    auto two = vfe_encode_voxel(f, store);
    ASSERT_EQ(one.size(), two.size());
    for (size_t o = 0; o < one.size(); ++o) {
        EXPECT_NEAR(one[o], two[o], 1e-12);
    }
}

TEST(Vfe, MatchesReferenceRecomputation) {
    auto store = vfe_store(6);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 0.2);
    PointCloud pc;
    for (int i = 0; i < 9; ++i) {
        pc.push_back({10.0 + u(rng), 3.0 + u(rng), -1.0 + 1.5 * u(rng), 5.0 * u(rng)});
    }
    std::vector<size_t> ids(pc.size());
    std::iota(ids.begin(), ids.end(), 0);
    auto got = vfe_encode_voxel(vfe_point_features(pc, ids), store);
    auto ref = reference_vfe(pc, store);
    ASSERT_EQ(got.size(), 128u);
    for (size_t o = 0; o < 128; ++o) {
        EXPECT_NEAR(got[o], ref[o], 1e-12);
    }
}

TEST(Vfe, PermutationInvariant) {
    auto store = vfe_store(8);
    VoxelConfig cfg;
    std::mt19937_64 rng(9);
    // All points inside voxel (7, 200, 100).
    std::uniform_real_distribution<double> u(0.0, 0.09);
    PointCloud pc;
    for (int i = 0; i < 20; ++i) {
        pc.push_back({20.05 + u(rng), 0.15 + u(rng), -1.05 + u(rng), u(rng)});
    }
    auto a = voxelize_vfe(pc, cfg, store);
    std::shuffle(pc.begin(), pc.end(), rng);
    auto b = voxelize_vfe(pc, cfg, store);
    ASSERT_EQ(a.active_count(), 1);
    ASSERT_EQ(b.active_count(), 1);
    EXPECT_LT((a.features() - b.features()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Vfe, CapIsSeededAndDeterministic) {
    auto store = vfe_store(10);
    VoxelConfig cfg;
    cfg.max_points = 5;
    cfg.seed = 42;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 0.09);
    PointCloud pc;
    for (int i = 0; i < 40; ++i) {
        pc.push_back({20.05 + u(rng), 0.15 + u(rng), -1.05 + u(rng), u(rng)});
    }
    auto a = voxelize_vfe(pc, cfg, store);
    auto b = voxelize_vfe(pc, cfg, store);
    ASSERT_EQ(a.active_count(), 1);
    EXPECT_EQ(a.features(), b.features());
    EXPECT_EQ(a.channels(), 128);
    EXPECT_EQ(a.shape(), (Shape3{15, 399, 351}));
}

} // namespace
} // namespace sp3d
