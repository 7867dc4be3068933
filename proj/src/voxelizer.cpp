// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/voxelizer.hpp"

#include "sp3d/error.hpp"
#include "sp3d/sparse_ops.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace sp3d {

namespace {

int raw_cells(double lo, double hi, double v) {
    if (!(hi > lo) || !(v > 0.0)) {
        throw ConfigError(fmt::format("invalid voxel range [{}, {}) with voxel size {}", lo, hi, v));
    }
    return static_cast<int>(std::ceil((hi - lo) / v - 1e-9));
}

int pad_to_pyramid(int d, int depth) {
    const int step = 1 << depth;
    const int tail = step - 1;
    if (d <= tail) {
        return step + tail;
    }
    int d_final = (d - tail + step - 1) / step;
    return std::max(1, d_final) * step + tail;
}

int cell_index(double v, double lo, double size, int cells) {
    int i = static_cast<int>(std::floor((v - lo) / size));
    return std::clamp(i, 0, cells - 1);
}

constexpr std::array<int, 4> kBvChannels{16, 32, 48, 64};

} // namespace

VoxelConfig VoxelConfig::kitti_bv() {
    VoxelConfig cfg;
    cfg.mode = VoxelMode::BV;
    cfg.vx = 0.025;
    cfg.vy = 0.025;
    cfg.vz = 0.0375;
    return cfg;
}

VoxelConfig VoxelConfig::kitti_vfe() { return VoxelConfig{}; }

bool VoxelConfig::in_range(const Point& p) const {
    return p.x >= x_min && p.x < x_max && p.y >= y_min && p.y < y_max && p.z >= z_min && p.z < z_max;
}

PointCloud crop(const PointCloud& pc, const VoxelConfig& cfg) {
    PointCloud out;
    std::copy_if(pc.begin(), pc.end(), std::back_inserter(out), [&](const Point& p) { return cfg.in_range(p); });
    return out;
}

Shape3 grid_shape(const VoxelConfig& cfg, int pyramid_depth) {
    if (pyramid_depth < 0 || pyramid_depth > 16) {
        throw ConfigError(fmt::format("pyramid depth {} out of range", pyramid_depth));
    }
    Shape3 raw{raw_cells(cfg.z_min, cfg.z_max, cfg.vz), raw_cells(cfg.y_min, cfg.y_max, cfg.vy),
               raw_cells(cfg.x_min, cfg.x_max, cfg.vx)};
    if (pyramid_depth == 0) {
        return raw;
    }
    return {pad_to_pyramid(raw.h, pyramid_depth), pad_to_pyramid(raw.w, pyramid_depth),
            pad_to_pyramid(raw.l, pyramid_depth)};
}

Coord3 voxel_of(const Point& p, const VoxelConfig& cfg) {
    return {cell_index(p.z, cfg.z_min, cfg.vz, raw_cells(cfg.z_min, cfg.z_max, cfg.vz)),
            cell_index(p.y, cfg.y_min, cfg.vy, raw_cells(cfg.y_min, cfg.y_max, cfg.vy)),
            cell_index(p.x, cfg.x_min, cfg.vx, raw_cells(cfg.x_min, cfg.x_max, cfg.vx))};
}

VoxelGroups group_points(const PointCloud& pc, const VoxelConfig& cfg) {
    VoxelGroups g;
    g.shape = grid_shape(cfg, cfg.pyramid_depth);
    std::map<Coord3, std::vector<size_t>> buckets;
    for (size_t i = 0; i < pc.size(); ++i) {
        if (cfg.in_range(pc[i])) {
            buckets[voxel_of(pc[i], cfg)].push_back(i);
        }
    }
    g.coords.reserve(buckets.size());
    g.members.reserve(buckets.size());
    for (auto& [coord, ids] : buckets) {
        g.coords.push_back(coord);
        g.members.push_back(std::move(ids));
    }
    return g;
}

SparseTensor3 voxelize_bv(const PointCloud& pc, const VoxelConfig& cfg) {
    VoxelGroups g = group_points(pc, cfg);
    auto index = std::make_shared<ActiveIndex>();
    index->reserve(g.coords.size());
    for (const auto& c : g.coords) {
        index->insert(c);
    }
    FeatureMatrix f = FeatureMatrix::Ones(static_cast<Eigen::Index>(g.coords.size()), 1);
    return SparseTensor3(g.shape, std::move(index), std::move(f));
}

std::vector<StageShape> bv_stack_shapes(Shape3 in_shape) {
    std::vector<StageShape> out;
    Shape3 s = in_shape;
    for (size_t i = 0; i < kBvChannels.size(); ++i) {
        ConvGeometry g{{3, 3, 3}, i == 0 ? Shape3{1, 1, 1} : Shape3{2, 2, 2},
                       i == 0 ? ConvMode::Submanifold : ConvMode::Standard, s};
        validate(g);
        s = output_shape(g);
        out.push_back({kBvChannels[i], s});
    }
    return out;
}

void add_bv_encoder_layers(ParamStore& store) {
    int c_in = 1;
    for (size_t i = 0; i < kBvChannels.size(); ++i) {
        store.add(fmt::format("bv.{}", i), i == 0 ? LayerKind::Submanifold : LayerKind::Standard, c_in,
                  kBvChannels[i], {3, 3, 3}, i == 0 ? Shape3{1, 1, 1} : Shape3{2, 2, 2});
        c_in = kBvChannels[i];
    }
}

std::vector<SparseTensor3> bv_encoder_stack(const SparseTensor3& t, const ParamStore& store) {
    std::vector<SparseTensor3> out;
    const SparseTensor3* cur = &t;
    for (size_t i = 0; i < kBvChannels.size(); ++i) {
        const Layer& layer = store.get(fmt::format("bv.{}", i));
        ConvMode mode = layer.kind == LayerKind::Submanifold ? ConvMode::Submanifold : ConvMode::Standard;
        ConvGeometry g = make_geometry(*cur, layer.kernel, layer.stride, mode);
        out.push_back(sparse_conv_forward(*cur, g, layer.w, ActivationKind::ReLU));
        cur = &out.back();
    }
    return out;
}

void add_vfe_layers(ParamStore& store, const VoxelConfig& cfg) {
    if (cfg.vfe_mid <= 0 || cfg.vfe_mid % 2 != 0 || cfg.vfe_out <= 0) {
        throw ConfigError("vfe widths must be positive and vfe_mid even");
    }
    store.add("vfe.0", LayerKind::Linear, 7, cfg.vfe_mid / 2, {1, 1, 1}, {1, 1, 1});
    store.add("vfe.1", LayerKind::Linear, cfg.vfe_mid, cfg.vfe_out, {1, 1, 1}, {1, 1, 1});
}

FeatureMatrix vfe_point_features(const PointCloud& pc, const std::vector<size_t>& kept) {
    const auto n = static_cast<Eigen::Index>(kept.size());
    FeatureMatrix f(n, 7);
    double cx = 0.0;
    double cy = 0.0;
    double cz = 0.0;
    for (size_t id : kept) {
        cx += pc[id].x;
        cy += pc[id].y;
        cz += pc[id].z;
    }
    if (n > 0) {
        cx /= static_cast<double>(n);
        cy /= static_cast<double>(n);
        cz /= static_cast<double>(n);
    }
    for (Eigen::Index r = 0; r < n; ++r) {
        const Point& p = pc[kept[static_cast<size_t>(r)]];
        f.row(r) << p.x, p.y, p.z, p.intensity, p.x - cx, p.y - cy, p.z - cz;
    }
    return f;
}

std::vector<double> vfe_encode_voxel(const FeatureMatrix& points, const ParamStore& store) {
    const ConvWeights& w0 = store.get("vfe.0").w;
    const ConvWeights& w1 = store.get("vfe.1").w;
    if (points.cols() != w0.c_in || w1.c_in != 2 * w0.c_out || points.rows() == 0) {
        throw Error("vfe_encode_voxel: layer widths do not chain");
    }
    Eigen::Map<const Eigen::RowVectorXd> b0(w0.bias.data(), w0.c_out);
    Eigen::Map<const Eigen::RowVectorXd> b1(w1.bias.data(), w1.c_out);

    FeatureMatrix h = ((points * w0.slice(0)).rowwise() + b0).cwiseMax(0.0);
    Eigen::RowVectorXd pooled = h.colwise().maxCoeff();
    FeatureMatrix cat(h.rows(), 2 * w0.c_out);
    cat << h, pooled.replicate(h.rows(), 1);

    FeatureMatrix h2 = ((cat * w1.slice(0)).rowwise() + b1).cwiseMax(0.0);
    Eigen::RowVectorXd out = h2.colwise().maxCoeff();
    return {out.data(), out.data() + out.size()};
}

SparseTensor3 voxelize_vfe(const PointCloud& pc, const VoxelConfig& cfg, const ParamStore& store) {
    if (cfg.max_points <= 0) {
        throw ConfigError("max_points must be positive");
    }
    VoxelGroups g = group_points(pc, cfg);
    std::mt19937_64 rng(cfg.seed);
    auto index = std::make_shared<ActiveIndex>();
    index->reserve(g.coords.size());
    const int c_out = store.get("vfe.1").w.c_out;
    FeatureMatrix f(static_cast<Eigen::Index>(g.coords.size()), c_out);
    for (size_t v = 0; v < g.coords.size(); ++v) {
        std::vector<size_t> kept = g.members[v];
        if (kept.size() > static_cast<size_t>(cfg.max_points)) {
            std::shuffle(kept.begin(), kept.end(), rng);
            kept.resize(static_cast<size_t>(cfg.max_points));
        }
        auto row = vfe_encode_voxel(vfe_point_features(pc, kept), store);
        index->insert(g.coords[v]);
        f.row(static_cast<Eigen::Index>(v)) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), c_out);
    }
    return SparseTensor3(g.shape, std::move(index), std::move(f));
}

} // namespace sp3d
