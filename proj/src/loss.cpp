// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/loss.hpp"

#include "sp3d/error.hpp"

#include <algorithm>
#include <cmath>

namespace sp3d {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

double focal_pos_term(double p, const LossConfig& cfg) {
    p = clamp_prob(p);
    return -cfg.alpha * std::pow(1.0 - p, cfg.gamma) * std::log(p);
}

double focal_neg_term(double p, const LossConfig& cfg) {
    p = clamp_prob(p);
    return -(1.0 - cfg.alpha) * std::pow(p, cfg.gamma) * std::log(1.0 - p);
}

// d(term)/d(logit) through p = sigmoid(z); zero where the clamp is active.
double focal_pos_grad(double z, const LossConfig& cfg) {
    double p = sigmoid(z);
    if (p < kProbEps || p > 1.0 - kProbEps) {
        return 0.0;
    }
    double q = 1.0 - p;
    double dp = -std::pow(q, cfg.gamma) / p;
    if (cfg.gamma != 0.0) {
        dp += cfg.gamma * std::pow(q, cfg.gamma - 1.0) * std::log(p);
    }
    return cfg.alpha * dp * p * q;
}

double focal_neg_grad(double z, const LossConfig& cfg) {
    double p = sigmoid(z);
    if (p < kProbEps || p > 1.0 - kProbEps) {
        return 0.0;
    }
    double q = 1.0 - p;
    double dp = std::pow(p, cfg.gamma) / q;
    if (cfg.gamma != 0.0) {
        dp -= cfg.gamma * std::pow(p, cfg.gamma - 1.0) * std::log(q);
    }
    return (1.0 - cfg.alpha) * dp * p * q;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

} // namespace

double focal_cls_loss(std::span<const double> pos_probs, std::span<const double> neg_probs, const LossConfig& cfg) {
    double pos = 0.0;
    for (double p : pos_probs) {
        pos += focal_pos_term(p, cfg);
    }
    double neg = 0.0;
    for (double p : neg_probs) {
        neg += focal_neg_term(p, cfg);
    }
    double out = 0.0;
    if (!pos_probs.empty()) {
        out += pos / static_cast<double>(pos_probs.size());
    }
    if (!neg_probs.empty()) {
        out += neg / static_cast<double>(neg_probs.size());
    }
    return out;
}

double smooth_l1(double x) {
    double a = std::abs(x);
    return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double reg_loss(std::span<const RegressionTarget> targets, std::span<const RegressionTarget> preds, int n_pos) {
    if (targets.size() != preds.size()) {
        throw Error("reg_loss: target and prediction counts differ");
    }
    if (n_pos <= 0) {
        return 0.0;
    }
    double sum = 0.0;
    for (size_t i = 0; i < targets.size(); ++i) {
        for (size_t c = 0; c < 7; ++c) {
            sum += smooth_l1(preds[i][c] - targets[i][c]);
        }
    }
    return sum / n_pos;
}

double dir_loss(std::span<const double> pos_probs, std::span<const double> neg_probs, int n_pos) {
    if (n_pos <= 0) {
        return 0.0;
    }
    double sum = 0.0;
    for (double p : pos_probs) {
        sum -= std::log(clamp_prob(p));
    }
    for (double p : neg_probs) {
        sum -= std::log(1.0 - clamp_prob(p));
    }
    return sum / n_pos;
}

double total_loss(const LossParts& parts, const LossConfig& cfg) {
    return cfg.kappa * parts.cls + cfg.lambda * parts.reg + cfg.mu * parts.dir;
}

HeadLoss head_loss(const HeadOutput& head, const Assignment& assignment, const LossConfig& cfg) {
    const int A = head.per_cell;
    const int W = head.cls.w;
    const int L = head.cls.l;
    const size_t n = static_cast<size_t>(W) * L * A;
    if (assignment.labels.size() != n || head.reg.channels != 7 * A || head.dir.channels != 2 * A) {
        throw Error("head_loss: head layout does not match the assignment");
    }
    HeadLoss out;
    out.grad.per_cell = A;
    out.grad.cls = Map2D(A, W, L);
    out.grad.reg = Map2D(7 * A, W, L);
    out.grad.dir = Map2D(2 * A, W, L);

    const int n_pos = assignment.n_pos;
    const int n_neg = assignment.n_neg;
    double cls_pos = 0.0;
    double cls_neg = 0.0;
    double reg = 0.0;
    double dir = 0.0;
    for (int i = 0; i < W; ++i) {
        for (int j = 0; j < L; ++j) {
            for (int k = 0; k < A; ++k) {
                size_t a = (static_cast<size_t>(i) * L + j) * A + k;
                double z = head.cls.at(k, i, j);
                switch (assignment.labels[a]) {
                case AnchorLabel::Negative:
                    cls_neg += focal_neg_term(sigmoid(z), cfg);
                    out.grad.cls.at(k, i, j) = cfg.kappa * focal_neg_grad(z, cfg) / n_neg;
                    break;
                case AnchorLabel::Positive: {
                    cls_pos += focal_pos_term(sigmoid(z), cfg);
                    out.grad.cls.at(k, i, j) = cfg.kappa * focal_pos_grad(z, cfg) / n_pos;
                    for (int c = 0; c < 7; ++c) {
                        double d = head.reg.at(7 * k + c, i, j) - assignment.targets[a][static_cast<size_t>(c)];
                        reg += smooth_l1(d);
                        double g = std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0);
                        out.grad.reg.at(7 * k + c, i, j) = cfg.lambda * g / n_pos;
                    }
                    // Two-way softmax: p(positive) = sigmoid(z1 - z0).
                    double margin = head.dir.at(2 * k + 1, i, j) - head.dir.at(2 * k, i, j);
                    double y = assignment.dir_positive[a] ? 1.0 : 0.0;
                    dir += y > 0.0 ? softplus(-margin) : softplus(margin);
                    double g = cfg.mu * (sigmoid(margin) - y) / n_pos;
                    out.grad.dir.at(2 * k + 1, i, j) = g;
                    out.grad.dir.at(2 * k, i, j) = -g;
                    break;
                }
                case AnchorLabel::Ignore:
                    break;
                }
            }
        }
    }
    if (n_pos > 0) {
        out.parts.cls += cls_pos / n_pos;
        out.parts.reg = reg / n_pos;
        out.parts.dir = dir / n_pos;
    }
    if (n_neg > 0) {
        out.parts.cls += cls_neg / n_neg;
    }
    out.total = total_loss(out.parts, cfg);
    return out;
}

} // namespace sp3d
