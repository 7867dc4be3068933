// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/error.hpp"
#include "sp3d/loss.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace sp3d {
namespace {

using testing::central_difference;
using testing::rel_error;

TEST(FocalLoss, PerfectIsZero) {
    LossConfig cfg;
    std::vector<double> pos{1.0, 1.0};
    std::vector<double> neg{0.0, 0.0, 0.0};
    EXPECT_NEAR(focal_cls_loss(pos, neg, cfg), 0.0, 1e-12);
}

TEST(FocalLoss, SingleHalfProbability) {
    LossConfig cfg;
    std::vector<double> pos{0.5};
    double v = focal_cls_loss(pos, {}, cfg);
    EXPECT_NEAR(v, -0.25 * 0.25 * std::log(0.5), 1e-15);
    EXPECT_NEAR(v, 0.043322, 1e-6);
}

TEST(FocalLoss, ReducesToHalfBinaryCrossEntropy) {
    LossConfig cfg;
    cfg.alpha = 0.5;
    cfg.gamma = 0.0;
    std::vector<double> pos{0.3, 0.8, 0.55};
    std::vector<double> neg{0.1, 0.4};
    double bce_pos = -(std::log(0.3) + std::log(0.8) + std::log(0.55)) / 3.0;
    double bce_neg = -(std::log(0.9) + std::log(0.6)) / 2.0;
    EXPECT_NEAR(focal_cls_loss(pos, neg, cfg), 0.5 * bce_pos + 0.5 * bce_neg, 1e-12);
}

TEST(FocalLoss, EmptyGroupsContributeZero) {
    LossConfig cfg;
    EXPECT_EQ(focal_cls_loss({}, {}, cfg), 0.0);
    std::vector<double> neg{0.2};
    EXPECT_NEAR(focal_cls_loss({}, neg, cfg), -0.75 * 0.04 * std::log(0.8), 1e-15);
}

TEST(FocalLoss, ClampsExtremeProbabilities) {
    LossConfig cfg;
    std::vector<double> pos{0.0};
    double v = focal_cls_loss(pos, {}, cfg);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, -0.25 * std::pow(1.0 - kProbEps, 2.0) * std::log(kProbEps), 1e-9);
}

TEST(RegLoss, Examples) {
    RegressionTarget t{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
    std::vector<RegressionTarget> targets{t};
    EXPECT_EQ(reg_loss(targets, targets, 1), 0.0);
    RegressionTarget half = t;
    half[3] += 0.5;
    EXPECT_NEAR(reg_loss(targets, std::vector<RegressionTarget>{half}, 1), 0.125, 1e-15);
    RegressionTarget two = t;
    two[0] -= 2.0;
    EXPECT_NEAR(reg_loss(targets, std::vector<RegressionTarget>{two}, 1), 1.5, 1e-15);
    EXPECT_EQ(reg_loss(targets, std::vector<RegressionTarget>{two}, 0), 0.0);
}

TEST(DirLoss, Examples) {
    std::vector<double> perfect_pos{1.0};
    std::vector<double> perfect_neg{0.0};
    EXPECT_NEAR(dir_loss(perfect_pos, perfect_neg, 2), 0.0, 1e-6);
    std::vector<double> half{0.5};
    EXPECT_NEAR(dir_loss(half, {}, 1), std::log(2.0), 1e-15);
    EXPECT_NEAR(dir_loss(half, half, 3), 2.0 * std::log(2.0) / 3.0, 1e-15);
    EXPECT_EQ(dir_loss(half, {}, 0), 0.0);
}

TEST(TotalLoss, Weights) {
    LossConfig cfg;
    EXPECT_EQ(total_loss({0.0, 0.0, 0.0}, cfg), 0.0);
    EXPECT_EQ(total_loss({1.0, 1.0, 1.0}, cfg), 4.0);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int t = 0; t < 20; ++t) {
        LossParts a{u(rng), u(rng), u(rng)};
        LossParts b{u(rng), u(rng), u(rng)};
        double s = u(rng);
        LossParts mix{a.cls + s * b.cls, a.reg + s * b.reg, a.dir + s * b.dir};
        EXPECT_NEAR(total_loss(mix, cfg), total_loss(a, cfg) + s * total_loss(b, cfg), 1e-12);
    }
}

struct Fixture {
    AnchorSet anchors;
    Assignment asg;
    HeadOutput head;
};

Fixture make_fixture(uint64_t seed) {
    std::mt19937_64 rng(seed);
    AnchorConfig cfg;
    cfg.x_max = 6.0;
    cfg.y_min = -3.0;
    cfg.y_max = 3.0;
    cfg.grid_w = 6;
    cfg.grid_l = 6;
    Fixture f;
    f.anchors = generate_anchors(cfg);
    std::vector<Box3D> gts{{2.1, -0.8, -2.4, 3.9, 1.6, 1.56, 0.4}, {4.4, 1.4, -2.5, 4.1, 1.7, 1.5, -2.0}};
    f.asg = assign_targets(f.anchors, gts);
    std::normal_distribution<double> n(0.0, 1.0);
    f.head.per_cell = f.anchors.per_cell;
    f.head.cls = Map2D(4, 6, 6);
    f.head.reg = Map2D(28, 6, 6);
    f.head.dir = Map2D(8, 6, 6);
    for (auto* m : {&f.head.cls, &f.head.reg, &f.head.dir}) {
        for (double& v : m->data) {
            v = n(rng);
        }
    }
    // Keep some regression residuals in the linear branch of smooth-L1.
    for (size_t i = 0; i < f.head.reg.data.size(); i += 5) {
        f.head.reg.data[i] *= 3.0;
    }
    return f;
}

TEST(HeadLoss, MatchesScalarLosses) {
    auto f = make_fixture(1);
    ASSERT_GT(f.asg.n_pos, 0);
    LossConfig cfg;
    std::vector<double> pos_p, neg_p, dir_pos, dir_neg;
    std::vector<RegressionTarget> targets, preds;
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
            for (int k = 0; k < 4; ++k) {
                size_t a = (static_cast<size_t>(i) * 6 + j) * 4 + k;
                double p = sigmoid(f.head.cls.at(k, i, j));
                if (f.asg.labels[a] == AnchorLabel::Negative) {
                    neg_p.push_back(p);
                } else if (f.asg.labels[a] == AnchorLabel::Positive) {
                    pos_p.push_back(p);
                    RegressionTarget r;
                    for (int c = 0; c < 7; ++c) {
                        r[static_cast<size_t>(c)] = f.head.reg.at(7 * k + c, i, j);
                    }
                    preds.push_back(r);
                    targets.push_back(f.asg.targets[a]);
                    double e0 = std::exp(f.head.dir.at(2 * k, i, j));
                    double e1 = std::exp(f.head.dir.at(2 * k + 1, i, j));
                    (f.asg.dir_positive[a] ? dir_pos : dir_neg).push_back(e1 / (e0 + e1));
                }
            }
        }
    }
    auto hl = head_loss(f.head, f.asg, cfg);
    EXPECT_NEAR(hl.parts.cls, focal_cls_loss(pos_p, neg_p, cfg), 1e-12);
    EXPECT_NEAR(hl.parts.reg, reg_loss(targets, preds, f.asg.n_pos), 1e-12);
    EXPECT_NEAR(hl.parts.dir, dir_loss(dir_pos, dir_neg, f.asg.n_pos), 1e-12);
    EXPECT_NEAR(hl.total, hl.parts.cls + 2.0 * hl.parts.reg + hl.parts.dir, 1e-12);
    EXPECT_GE(hl.parts.cls, 0.0);
    EXPECT_GE(hl.parts.reg, 0.0);
    EXPECT_GE(hl.parts.dir, 0.0);
}

TEST(HeadLoss, GradientsMatchFiniteDifferences) {
    for (double gamma : {2.0, 0.0, 1.5}) {
        auto f = make_fixture(3);
        LossConfig cfg;
        cfg.gamma = gamma;
        auto hl = head_loss(f.head, f.asg, cfg);
        double worst = 0.0;
        for (auto [m, g] : {std::pair{&f.head.cls, &hl.grad.cls}, std::pair{&f.head.reg, &hl.grad.reg},
                            std::pair{&f.head.dir, &hl.grad.dir}}) {
            for (size_t i = 0; i < m->data.size(); ++i) {
                double numeric =
                    central_difference(m->data[i], [&] { return head_loss(f.head, f.asg, cfg).total; }, 1e-6);
                worst = std::max(worst, rel_error(g->data[i], numeric));
            }
        }
        EXPECT_LT(worst, 1e-6) << "gamma " << gamma;
    }
}

TEST(HeadLoss, IgnoredAnchorsHaveNoGradient) {
    auto f = make_fixture(2);
    auto hl = head_loss(f.head, f.asg, {});
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
            for (int k = 0; k < 4; ++k) {
                size_t a = (static_cast<size_t>(i) * 6 + j) * 4 + k;
                if (f.asg.labels[a] == AnchorLabel::Ignore) {
                    EXPECT_EQ(hl.grad.cls.at(k, i, j), 0.0);
                }
                if (f.asg.labels[a] != AnchorLabel::Positive) {
                    EXPECT_EQ(hl.grad.reg.at(7 * k, i, j), 0.0);
                    EXPECT_EQ(hl.grad.dir.at(2 * k, i, j), 0.0);
                }
            }
        }
    }
}

TEST(HeadLoss, RejectsMismatchedAssignment) {
    auto f = make_fixture(1);
    f.asg.labels.pop_back();
    EXPECT_THROW(head_loss(f.head, f.asg, {}), Error);
}

} // namespace
} // namespace sp3d
