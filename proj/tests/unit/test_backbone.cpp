// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/backbone.hpp"
#include "sp3d/error.hpp"
#include "sp3d/sparse_ops.hpp"
#include "test_util.hpp"

#include <fmt/format.h>
#include <gtest/gtest.h>

#include <random>

namespace sp3d {
namespace {

using testing::central_difference;
using testing::random_tensor;
using testing::rel_error;

BackboneConfig tiny_config(BackboneVariant v) {
    BackboneConfig cfg;
    cfg.variant = v;
    cfg.in_channels = 2;
    cfg.channels = {3, 3, 4, 4};
    cfg.out_channels = {2, 3, 2, 2};
    cfg.blocks_per_level = 1;
    cfg.fusion_channels = 3;
    cfg.anchors_per_cell = 2;
    return cfg;
}

ParamStore build(const BackboneConfig& cfg, Shape3 shape, uint64_t seed) {
    ParamStore store;
    add_model_layers(store, cfg, shape);
    std::mt19937_64 rng(seed);
    init_model(store, cfg, rng);
    // Nonzero biases so every bias gradient is exercised.
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto& l : store.layers()) {
        for (double& b : l.w.bias) {
            b += u(rng);
        }
    }
    return store;
}

bool all_zero(const Map2D& m) {
    return std::all_of(m.data.begin(), m.data.end(), [](double v) { return v == 0.0; });
}

TEST(LevelShapes, FullScalePyramid) {
    auto s = level_shapes({15, 399, 351}, 4);
    ASSERT_EQ(s.size(), 4u);
    EXPECT_EQ(s[0], (Shape3{15, 399, 351}));
    EXPECT_EQ(s[1], (Shape3{7, 199, 175}));
    EXPECT_EQ(s[2], (Shape3{3, 99, 87}));
    EXPECT_EQ(s[3], (Shape3{1, 49, 43}));
}

TEST(LevelShapes, IncompatibleThrows) { EXPECT_THROW(level_shapes({14, 31, 31}, 4), Error); }

TEST(Fusion, FullScaleGridArithmetic) {
    // Levels 1, 3 and 4 land on the level-2 grid.
    EXPECT_EQ(conv2d_output_dims(399, 351, {3, 2, 0}), std::make_pair(199, 175));
    EXPECT_EQ(deconv2d_output_dims(99, 87, {3, 2, 0}), std::make_pair(199, 175));
    EXPECT_EQ(deconv2d_output_dims(49, 43, {7, 4, 0}), std::make_pair(199, 175));
    EXPECT_EQ(199 * 175 * 4, 139300);
}

TEST(Backbone, DeskScaleMapDims) {
    BackboneConfig cfg;
    cfg.in_channels = 1;
    cfg.channels = {4, 4, 4, 4};
    cfg.out_channels = {4, 4, 4, 4};
    cfg.fusion_channels = 4;
    Shape3 shape{15, 31, 31};
    for (auto v : {BackboneVariant::BottomUp, BackboneVariant::TopDown}) {
        cfg.variant = v;
        auto store = build(cfg, shape, 1);
        std::mt19937_64 rng(2);
        auto t = random_tensor(rng, shape, 1, 0.05);
        auto maps = forward_backbone(t, cfg, store);
        ASSERT_EQ(maps.size(), 4u);
        const int dims[4] = {31, 15, 7, 3};
        for (size_t i = 0; i < 4; ++i) {
            EXPECT_EQ(maps[i].w, dims[i]);
            EXPECT_EQ(maps[i].l, dims[i]);
            EXPECT_EQ(maps[i].channels, 4);
        }
        auto head = fusion_forward(maps, cfg, store);
        EXPECT_EQ(head.cls.w, 15);
        EXPECT_EQ(head.cls.l, 15);
        EXPECT_EQ(head.cls.channels, 4);
        EXPECT_EQ(head.reg.channels, 28);
        EXPECT_EQ(head.dir.channels, 8);
    }
}

TEST(Backbone, EmptyInputGivesZeroMaps) {
    for (auto v : {BackboneVariant::BottomUp, BackboneVariant::TopDown}) {
        auto cfg = tiny_config(v);
        Shape3 shape{15, 15, 15};
        auto store = build(cfg, shape, 3);
        SparseTensor3 empty(shape, cfg.in_channels);
        auto maps = forward_backbone(empty, cfg, store);
        ASSERT_EQ(maps.size(), 4u);
        for (const auto& m : maps) {
            EXPECT_TRUE(all_zero(m));
        }
    }
}

TEST(Backbone, SubmanifoldLevelsKeepSites) {
    auto cfg = tiny_config(BackboneVariant::TopDown);
    cfg.blocks_per_level = 2;
    Shape3 shape{15, 15, 15};
    auto store = build(cfg, shape, 4);
    std::mt19937_64 rng(5);
    auto t = random_tensor(rng, shape, 2, 0.1);
    ModelCache cache;
    model_forward(t, cfg, store, &cache);
    EXPECT_EQ(cache.backbone.entry.rb->out_index.get(), t.index_ptr().get());
    for (const auto& lvl : cache.backbone.levels) {
        for (const auto& blk : lvl.blocks) {
            EXPECT_EQ(blk.conv0.rb->out_count(), blk.conv0.rb->in_count);
            EXPECT_EQ(blk.conv0.rb, lvl.blocks.front().conv0.rb);
        }
    }
    for (const auto& td : cache.backbone.topdown) {
        EXPECT_EQ(td.fuse.rb->out_count(), td.fuse.rb->in_count);
    }
}

TEST(Backbone, VariantsShareOutputDims) {
    Shape3 shape{15, 15, 15};
    std::mt19937_64 rng(6);
    auto t = random_tensor(rng, shape, 2, 0.1);
    auto c1 = tiny_config(BackboneVariant::BottomUp);
    auto c2 = tiny_config(BackboneVariant::TopDown);
    auto m1 = forward_backbone(t, c1, build(c1, shape, 7));
    auto m2 = forward_backbone(t, c2, build(c2, shape, 7));
    ASSERT_EQ(m1.size(), m2.size());
    for (size_t i = 0; i < m1.size(); ++i) {
        EXPECT_TRUE(m1[i].same_dims(m2[i]));
    }
}

TEST(Backbone, SingleLevelVariantsAgree) {
    BackboneConfig cfg = tiny_config(BackboneVariant::BottomUp);
    cfg.channels = {3};
    cfg.out_channels = {2};
    Shape3 shape{3, 9, 9};
    auto store = build(cfg, shape, 8);
    std::mt19937_64 rng(9);
    auto t = random_tensor(rng, shape, 2, 0.2);
    auto a = forward_3dbn1(t, cfg, store);
    auto b = forward_3dbn2(t, cfg, store);
    ASSERT_EQ(a.size(), 1u);
    EXPECT_EQ(a[0].data, b[0].data);
}

TEST(Backbone, RepeatRunsAreBitIdentical) {
    auto cfg = tiny_config(BackboneVariant::TopDown);
    Shape3 shape{15, 15, 15};
    auto store = build(cfg, shape, 10);
    std::mt19937_64 rng(11);
    auto t = random_tensor(rng, shape, 2, 0.15);
    auto h1 = model_forward(t, cfg, store);
    auto h2 = model_forward(t, cfg, store);
    EXPECT_EQ(h1.cls.data, h2.cls.data);
    EXPECT_EQ(h1.reg.data, h2.reg.data);
    EXPECT_EQ(h1.dir.data, h2.dir.data);
}

TEST(Fusion, ZeroMapsZeroBiasGiveZeroHeads) {
    auto cfg = tiny_config(BackboneVariant::TopDown);
    Shape3 shape{15, 15, 15};
    auto store = build(cfg, shape, 12);
    for (auto& l : store.layers()) {
        std::fill(l.w.bias.begin(), l.w.bias.end(), 0.0);
    }
    std::vector<Map2D> maps{Map2D(2, 15, 15), Map2D(3, 7, 7), Map2D(2, 3, 3), Map2D(2, 1, 1)};
    auto head = fusion_forward(maps, cfg, store);
    EXPECT_TRUE(all_zero(head.cls));
    EXPECT_TRUE(all_zero(head.reg));
    EXPECT_TRUE(all_zero(head.dir));
    EXPECT_EQ(head.cls.w, 7);
}

TEST(Fusion, RejectsMisalignedMaps) {
    auto cfg = tiny_config(BackboneVariant::TopDown);
    auto store = build(cfg, {15, 15, 15}, 13);
    std::vector<Map2D> maps{Map2D(2, 15, 15), Map2D(3, 6, 7), Map2D(2, 3, 3), Map2D(2, 1, 1)};
    EXPECT_THROW(fusion_forward(maps, cfg, store), Error);
}

TEST(Fusion, ClassificationBiasStartsAtPrior) {
    auto cfg = tiny_config(BackboneVariant::TopDown);
    ParamStore store;
    add_model_layers(store, cfg, {15, 15, 15});
    std::mt19937_64 rng(14);
    init_model(store, cfg, rng);
    for (double b : store.get("head.cls").w.bias) {
        EXPECT_NEAR(sigmoid(b), 0.01, 1e-12);
    }
}

double functional(const HeadOutput& h, const HeadOutput& coef) {
    double s = 0.0;
    for (size_t i = 0; i < h.cls.data.size(); ++i) {
        s += h.cls.data[i] * coef.cls.data[i];
    }
    for (size_t i = 0; i < h.reg.data.size(); ++i) {
        s += h.reg.data[i] * coef.reg.data[i];
    }
    for (size_t i = 0; i < h.dir.data.size(); ++i) {
        s += h.dir.data[i] * coef.dir.data[i];
    }
    return s;
}

void check_model_gradients(BackboneVariant variant, uint64_t seed) {
    auto cfg = tiny_config(variant);
    Shape3 shape{15, 15, 15};
    auto store = build(cfg, shape, seed);
    std::mt19937_64 rng(seed + 100);
    auto t = random_tensor(rng, shape, 2, 0.12);
    ModelCache cache;
    HeadOutput head = model_forward(t, cfg, store, &cache);
    HeadOutput coef = head;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto* m : {&coef.cls, &coef.reg, &coef.dir}) {
        for (double& v : m->data) {
            v = u(rng);
        }
    }
    ParamStore grads = model_backward(cache, cfg, store, coef);
    auto loss = [&] { return functional(model_forward(t, cfg, store), coef); };
    double worst = 0.0;
    int checked = 0;
    for (size_t li = 0; li < store.layers().size(); ++li) {
        auto& layer = store.layers()[li];
        const auto& g = grads.layers()[li].w;
        std::uniform_int_distribution<size_t> pick_w(0, layer.w.weights.size() - 1);
        for (int k = 0; k < 3; ++k) {
            size_t i = pick_w(rng);
            double numeric = central_difference(layer.w.weights[i], loss);
            worst = std::max(worst, rel_error(g.weights[i], numeric));
            ++checked;
        }
        std::uniform_int_distribution<size_t> pick_b(0, layer.w.bias.size() - 1);
        size_t b = pick_b(rng);
        double numeric = central_difference(layer.w.bias[b], loss);
        worst = std::max(worst, rel_error(g.bias[b], numeric));
        ++checked;
        EXPECT_LT(worst, 1e-6) << "layer " << layer.name;
    }
    EXPECT_GT(checked, 40);
}

TEST(ModelBackward, BottomUpMatchesFiniteDifferences) { check_model_gradients(BackboneVariant::BottomUp, 21); }

TEST(ModelBackward, TopDownMatchesFiniteDifferences) { check_model_gradients(BackboneVariant::TopDown, 22); }

TEST(GraphSummary, ListsEveryLayer) {
    auto cfg = tiny_config(BackboneVariant::TopDown);
    ParamStore store;
    add_model_layers(store, cfg, {15, 15, 15});
    std::string s = graph_summary(store);
    for (const auto& l : store.layers()) {
        EXPECT_NE(s.find(l.name), std::string::npos);
    }
    EXPECT_NE(s.find("up2"), std::string::npos);
    EXPECT_NE(s.find("compress3        standard        4 -> 2    kernel 1x1x1"), std::string::npos) << s;
    EXPECT_NE(s.find(fmt::format("total params {}", store.parameter_count())), std::string::npos);
}

} // namespace
} // namespace sp3d
