// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/pipeline.hpp"

#include "sp3d/error.hpp"
#include "sp3d/voxelizer.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>

namespace sp3d {

ParamStore build_model(const RunConfig& cfg) {
    cfg.validate();
    ParamStore store;
    if (cfg.voxel.mode == VoxelMode::VFE) {
        add_vfe_layers(store, cfg.voxel);
    } else if (cfg.bv_encoder) {
        add_bv_encoder_layers(store);
    }
    const BackboneConfig bc = model_config(cfg);
    add_model_layers(store, bc, backbone_input_shape(cfg));
    std::mt19937_64 rng(cfg.seed);
    init_model(store, bc, rng);
    return store;
}

SparseTensor3 encode_input(const PointCloud& pc, const RunConfig& cfg, const ParamStore& store) {
    VoxelConfig vc = cfg.voxel;
    vc.seed = cfg.seed;
    if (vc.mode == VoxelMode::VFE) {
        return voxelize_vfe(pc, vc, store);
    }
    SparseTensor3 occ = voxelize_bv(pc, vc);
    if (!cfg.bv_encoder) {
        return occ;
    }
    return bv_encoder_stack(occ, store).back();
}

std::vector<Detection> infer(const PointCloud& pc, const RunConfig& cfg, const ParamStore& store,
                             const AnchorSet& anchors) {
    HeadOutput head = model_forward(encode_input(pc, cfg, store), model_config(cfg), store);
    return decode_detections(head, anchors, cfg.detect.score_threshold, cfg.detect.nms_threshold);
}

Adam::Adam(const ParamStore& like, const OptimizerConfig& cfg) : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

void Adam::step(ParamStore& params, const ParamStore& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
        }
    };
    auto& layers = params.layers();
    for (size_t k = 0; k < layers.size(); ++k) {
        const Layer& g = grads.get(layers[k].name);
        Layer& m = m_.get(layers[k].name);
        Layer& v = v_.get(layers[k].name);
        update(layers[k].w.weights, g.w.weights, m.w.weights, v.w.weights);
        update(layers[k].w.bias, g.w.bias, m.w.bias, v.w.bias);
    }
}

namespace {

void check_desk_scale(const RunConfig& cfg) {
    Shape3 in = backbone_input_shape(cfg);
    if (in.h > 15 || in.w > 63 || in.l > 63) {
        throw ConfigError(fmt::format("train-toy needs a grid of at most 15 x 63 x 63, got {} x {} x {}", in.h, in.w,
                                      in.l));
    }
    for (int c : cfg.backbone.channels) {
        if (c > 16) {
            throw ConfigError("train-toy needs at most 16 channels per level");
        }
    }
    if (cfg.voxel.mode != VoxelMode::BV || cfg.bv_encoder) {
        throw ConfigError("train-toy trains from occupancy input (voxel.mode = bv, voxel.bv_encoder = false)");
    }
}

} // namespace

TrainResult train_toy(const RunConfig& cfg, std::span<const Scene> scenes,
                      const std::function<void(const TrainStep&)>& on_step) {
    cfg.validate();
    check_desk_scale(cfg);
    if (scenes.empty()) {
        throw Error("train-toy: no scenes");
    }
    TrainResult result{build_model(cfg), {}};
    ParamStore& store = result.weights;
    const BackboneConfig bc = model_config(cfg);
    const AnchorSet anchors = generate_anchors(anchor_config(cfg));
    Adam adam(store, cfg.optim);
    std::mt19937_64 aug_rng(cfg.seed ^ 0x5eedULL);

    GtDatabase db;
    if (cfg.augment_enabled) {
        db = build_gt_database(scenes);
    }
    // Without augmentation every scene's input and targets are fixed.
    std::vector<SparseTensor3> inputs;
    std::vector<Assignment> targets;
    if (!cfg.augment_enabled) {
        for (const auto& s : scenes) {
            inputs.push_back(encode_input(s.cloud, cfg, store));
            targets.push_back(assign_targets(anchors, s.gt_boxes, cfg.match));
        }
    }

    for (int step = 0; step < cfg.optim.steps; ++step) {
        const size_t k = static_cast<size_t>(step) % scenes.size();
        if (cfg.augment_enabled) {
            Scene s = augment(scenes[k], db, cfg.augment, aug_rng);
            inputs.assign(1, encode_input(s.cloud, cfg, store));
            targets.assign(1, assign_targets(anchors, s.gt_boxes, cfg.match));
        }
        const size_t slot = cfg.augment_enabled ? 0 : k;
        const SparseTensor3& x = inputs[slot];
        const Assignment& a = targets[slot];

        ModelCache cache;
        HeadOutput head = model_forward(x, bc, store, &cache);
        HeadLoss hl = head_loss(head, a, cfg.loss);
        if (!std::isfinite(hl.total)) {
            throw Error(fmt::format("train-toy diverged: non-finite loss at step {}", step));
        }
        TrainStep rec{step, learning_rate(cfg.optim, step), hl.parts, hl.total};
        result.curve.push_back(rec);
        if (on_step) {
            on_step(rec);
        }
        ParamStore grads = model_backward(cache, bc, store, hl.grad);
        adam.step(store, grads, rec.lr);
    }
    return result;
}

} // namespace sp3d
