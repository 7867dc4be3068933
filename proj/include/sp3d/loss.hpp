// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Focal classification, smooth-L1 regression and direction losses.
//
#pragma once

#include "sp3d/detection.hpp"

#include <span>

namespace sp3d {

struct LossConfig {
    double kappa = 1.0;
    double lambda = 2.0;
    double mu = 1.0;
    double alpha = 0.25;
    double gamma = 2.0;
};

inline constexpr double kProbEps = 1e-7;

struct LossParts {
    double cls = 0.0;
    double reg = 0.0;
    double dir = 0.0;
};

/// Alpha-balanced focal loss over positive and negative probabilities; each
/// group is normalized by its own size and an empty group contributes 0.
double focal_cls_loss(std::span<const double> pos_probs, std::span<const double> neg_probs, const LossConfig& cfg);

double smooth_l1(double x);

/// Sum of smooth-L1 over all components of all positives, divided by n_pos.
double reg_loss(std::span<const RegressionTarget> targets, std::span<const RegressionTarget> preds, int n_pos);

/// `pos_probs` are positive-direction probabilities of anchors whose gt heading
/// is positive, `neg_probs` the same probability for negative-heading anchors.
double dir_loss(std::span<const double> pos_probs, std::span<const double> neg_probs, int n_pos);

double total_loss(const LossParts& parts, const LossConfig& cfg);

struct HeadLoss {
    LossParts parts;
    double total = 0.0;
    HeadOutput grad; // d total / d logits, same layout as the head
};

/// Evaluates all three losses on raw head logits against an assignment, with
/// analytic gradients. Ignored anchors contribute nothing.
HeadLoss head_loss(const HeadOutput& head, const Assignment& assignment, const LossConfig& cfg = {});

} // namespace sp3d
