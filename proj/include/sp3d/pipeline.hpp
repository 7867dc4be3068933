// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end model assembly, inference and the toy training loop.
//
#pragma once

#include "sp3d/augmentation.hpp"
#include "sp3d/backbone.hpp"
#include "sp3d/config.hpp"
#include "sp3d/detection.hpp"
#include "sp3d/loss.hpp"
#include "sp3d/params.hpp"

#include <functional>
#include <span>
#include <vector>

namespace sp3d {

/// Input encoder layers (if any) plus backbone, fusion and heads, He
/// initialized from cfg.seed.
ParamStore build_model(const RunConfig& cfg);

/// Voxelizes `pc` and runs the input encoder.
SparseTensor3 encode_input(const PointCloud& pc, const RunConfig& cfg, const ParamStore& store);

std::vector<Detection> infer(const PointCloud& pc, const RunConfig& cfg, const ParamStore& store,
                             const AnchorSet& anchors);

/// Adaptive-moment update with bias correction.
class Adam {
  public:
    Adam(const ParamStore& like, const OptimizerConfig& cfg);
    void step(ParamStore& params, const ParamStore& grads, double lr);
    long steps_taken() const { return t_; }

  private:
    OptimizerConfig cfg_;
    ParamStore m_;
    ParamStore v_;
    long t_ = 0;
};

struct TrainStep {
    int step = 0;
    double lr = 0.0;
    LossParts parts;
    double total = 0.0;
};

struct TrainResult {
    ParamStore weights;
    std::vector<TrainStep> curve;
};

/// cfg.optim.steps updates cycling through `scenes`; each step runs the
/// forward pass, the detection loss, the analytic backward pass and one Adam
/// update. Augmentation is applied per step when enabled. Throws Error naming
/// the step on a non-finite loss. Requires a desk-scale input (grid at most
/// 15 x 63 x 63) and at most 16 channels per level.
TrainResult train_toy(const RunConfig& cfg, std::span<const Scene> scenes,
                      const std::function<void(const TrainStep&)>& on_step = {});

} // namespace sp3d
