// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/bench.hpp"

#include "sp3d/checks.hpp"
#include "sp3d/error.hpp"
#include "sp3d/pipeline.hpp"
#include "sp3d/rulebook.hpp"
#include "sp3d/sparse_ops.hpp"

#include <fmt/format.h>

#include <array>
#include <chrono>
#include <cmath>

namespace sp3d {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

constexpr Shape3 kCube3{3, 3, 3};
constexpr Shape3 kUnit{1, 1, 1};
constexpr Shape3 kStride2{2, 2, 2};

} // namespace

std::vector<BenchRow> bench(const RunConfig& cfg, std::span<const double> densities) {
    const ParamStore store = build_model(cfg);
    const BackboneConfig bc = model_config(cfg);
    const Shape3 shape = backbone_input_shape(cfg);
    std::mt19937_64 rng(cfg.seed);
    std::vector<BenchRow> rows;
    for (double d : densities) {
        if (!(d >= 0.0 && d <= 1.0)) {
            throw ConfigError(fmt::format("bench: density {} outside [0, 1]", d));
        }
        BenchRow row;
        row.density = d;
        SparseTensor3 x = random_sparse_tensor(rng, shape, bc.in_channels, d);
        row.active_sites = x.active_count();
        SparseTensor3 a = x;
        for (int lvl = 0; lvl < bc.levels(); ++lvl) {
            const int c = lvl == 0 ? bc.in_channels : bc.channels[static_cast<size_t>(lvl - 1)];
            auto t0 = Clock::now();
            RuleBook sub = build_rulebook(a.index_ptr(), ConvGeometry{kCube3, kUnit, ConvMode::Submanifold, a.shape()});
            row.rulebook_ms += ms_since(t0);
            row.rulebook_pairs += sub.total_pairs();
            ConvWeights w = random_conv_weights(rng, c, 27, c);
            t0 = Clock::now();
            FeatureMatrix out = apply_rules(a.features(), sub, w);
            row.gemm_ms += ms_since(t0);
            if (lvl + 1 == bc.levels()) {
                break;
            }
            ConvGeometry down{kCube3, kStride2, ConvMode::Standard, a.shape()};
            t0 = Clock::now();
            RuleBook rb = build_rulebook(a.index_ptr(), down);
            row.rulebook_ms += ms_since(t0);
            row.rulebook_pairs += rb.total_pairs();
            t0 = Clock::now();
            FeatureMatrix next = apply_rules(a.features(), rb, w);
            row.gemm_ms += ms_since(t0);
            a = SparseTensor3(rb.out_shape, rb.out_index, std::move(next));
        }
        auto t0 = Clock::now();
        HeadOutput head = model_forward(x, bc, store);
        row.forward_ms = ms_since(t0);
        rows.push_back(row);
    }
    return rows;
}

std::string bench_csv(std::span<const BenchRow> rows) {
    std::string out = "density,active_sites,rulebook_pairs,rulebook_ms,gemm_ms,forward_ms\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{:.3f},{:.3f},{:.3f}\n", r.density, r.active_sites, r.rulebook_pairs, r.rulebook_ms,
                           r.gemm_ms, r.forward_ms);
    }
    return out;
}

PairCount replicated_block_pairs(int copies, uint64_t seed) {
    if (copies < 1) {
        throw Error("replicated_block_pairs: copies must be positive");
    }
    constexpr int kBlock = 6;
    constexpr int kPitch = 10;
    constexpr int kMargin = 2;
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution on(0.3);
    std::vector<Coord3> pattern;
    for (int h = 0; h < kBlock; ++h) {
        for (int w = 0; w < kBlock; ++w) {
            for (int l = 0; l < kBlock; ++l) {
                if (on(rng)) {
                    pattern.push_back({h, w, l});
                }
            }
        }
    }
    std::vector<Site> sites;
    for (int c = 0; c < copies; ++c) {
        for (const auto& p : pattern) {
            sites.push_back({{p.h + kMargin, p.w + kMargin, p.l + kMargin + c * kPitch}, {1.0}});
        }
    }
    // Even pitch and (d - 3) even on every axis.
    const Shape3 shape{kBlock + 2 * kMargin + 1, kBlock + 2 * kMargin + 1, copies * kPitch + 3};
    SparseTensor3 t = SparseTensor3::from_sites(shape, 1, sites);
    PairCount pc;
    pc.active_sites = t.active_count();
    pc.submanifold_pairs =
        build_rulebook(t.index_ptr(), ConvGeometry{kCube3, kUnit, ConvMode::Submanifold, shape}).total_pairs();
    pc.standard_pairs =
        build_rulebook(t.index_ptr(), ConvGeometry{kCube3, kStride2, ConvMode::Standard, shape}).total_pairs();
    return pc;
}

namespace {

struct Canvas {
    int width;
    int height;
    std::vector<uint8_t> rgb;

    void put(int x, int y, std::array<uint8_t, 3> c) {
        if (x < 0 || y < 0 || x >= width || y >= height) {
            return;
        }
        size_t i = 3 * (static_cast<size_t>(y) * width + x);
        rgb[i] = c[0];
        rgb[i + 1] = c[1];
        rgb[i + 2] = c[2];
    }

    void line(int x0, int y0, int x1, int y1, std::array<uint8_t, 3> c) {
        int dx = std::abs(x1 - x0);
        int dy = -std::abs(y1 - y0);
        int sx = x0 < x1 ? 1 : -1;
        int sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            put(x0, y0, c);
            if (x0 == x1 && y0 == y1) {
                break;
            }
            int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }
};

} // namespace

std::string render_bev_ppm(const PointCloud& pc, std::span<const Box3D> gts, std::span<const Detection> dets,
                           const VoxelConfig& range, double meters_per_pixel) {
    if (!(meters_per_pixel > 0.0)) {
        throw Error("render_bev_ppm: pixel size must be positive");
    }
    const int width = static_cast<int>(std::ceil((range.x_max - range.x_min) / meters_per_pixel));
    const int height = static_cast<int>(std::ceil((range.y_max - range.y_min) / meters_per_pixel));
    Canvas cv{width, height, std::vector<uint8_t>(static_cast<size_t>(width) * height * 3, 255)};
    auto px = [&](double x) { return static_cast<int>(std::floor((x - range.x_min) / meters_per_pixel)); };
    auto py = [&](double y) { return height - 1 - static_cast<int>(std::floor((y - range.y_min) / meters_per_pixel)); };
    for (const auto& p : pc) {
        cv.put(px(p.x), py(p.y), {96, 96, 96});
    }
    auto draw_box = [&](const Box3D& b, std::array<uint8_t, 3> c) {
        auto corners = bev_corners(b);
        for (size_t i = 0; i < 4; ++i) {
            const Vec2& p = corners[i];
            const Vec2& q = corners[(i + 1) % 4];
            cv.line(px(p.x), py(p.y), px(q.x), py(q.y), c);
        }
        cv.line(px(b.x), py(b.y), px(b.x + 0.5 * b.l * std::cos(b.theta)), py(b.y + 0.5 * b.l * std::sin(b.theta)), c);
    };
    for (const auto& b : gts) {
        draw_box(b, {0, 160, 0});
    }
    for (const auto& d : dets) {
        draw_box(d.box, {220, 0, 0});
    }
    std::string out = fmt::format("P6\n{} {}\n255\n", width, height);
    out.append(reinterpret_cast<const char*>(cv.rgb.data()), cv.rgb.size());
    return out;
}

} // namespace sp3d
