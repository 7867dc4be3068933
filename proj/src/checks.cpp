// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/checks.hpp"

#include "sp3d/conv2d.hpp"
#include "sp3d/detection.hpp"
#include "sp3d/loss.hpp"
#include "sp3d/rulebook.hpp"
#include "sp3d/sparse_ops.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace sp3d {

namespace {

constexpr double kFdStep = 1e-5;

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

template <typename Fn>
double central_difference(double& x, Fn&& f) {
    const double saved = x;
    x = saved + kFdStep;
    const double plus = f();
    x = saved - kFdStep;
    const double minus = f();
    x = saved;
    return (plus - minus) / (2.0 * kFdStep);
}

void record(CheckReport& r, double err, bool& case_failed) {
    r.worst = std::max(r.worst, err);
    if (!(err <= r.tolerance)) {
        case_failed = true;
    }
}

double dense_dot(const SparseTensor3& a, const SparseTensor3& b) {
    DenseGrid4 da = to_dense(a);
    DenseGrid4 db = to_dense(b);
    double s = 0.0;
    for (size_t i = 0; i < da.data.size(); ++i) {
        s += da.data[i] * db.data[i];
    }
    return s;
}

Map2D random_map(std::mt19937_64& rng, int c, int w, int l) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Map2D m(c, w, l);
    for (double& v : m.data) {
        v = u(rng);
    }
    return m;
}

double map_dot(const Map2D& a, const Map2D& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        s += a.data[i] * b.data[i];
    }
    return s;
}

CheckReport check_dense_gradients(const char* name, bool transposed, int cases, uint64_t seed, double tol) {
    CheckReport r{name, 0, 0, 0.0, tol};
    std::mt19937_64 rng(seed);
    for (int t = 0; t < cases; ++t) {
        Conv2dSpec spec{uniform_int(rng, 1, 3), uniform_int(rng, 1, 2), 0};
        spec.pad = transposed ? 0 : uniform_int(rng, 0, spec.kernel - 1);
        const int c_in = uniform_int(rng, 1, 3);
        const int c_out = uniform_int(rng, 1, 3);
        const int w = uniform_int(rng, spec.kernel, 5);
        const int l = uniform_int(rng, spec.kernel, 5);
        Map2D in = random_map(rng, c_in, w, l);
        ConvWeights wt = random_conv_weights(rng, c_in, spec.volume(), c_out);
        auto run = [&] {
            return transposed ? dense_deconv2d(in, spec, wt, ActivationKind::Identity)
                              : dense_conv2d(in, spec, wt, ActivationKind::Identity);
        };
        Map2D out = run();
        Map2D up = random_map(rng, out.channels, out.w, out.l);
        auto loss = [&] { return map_dot(run(), up); };
        Conv2dGrads g = transposed ? dense_deconv2d_backward(in, spec, wt, up) : dense_conv2d_backward(in, spec, wt, up);
        bool failed = false;
        for (size_t i = 0; i < wt.weights.size(); ++i) {
            record(r, gradient_rel_error(g.params.weights[i], central_difference(wt.weights[i], loss)), failed);
        }
        for (size_t i = 0; i < wt.bias.size(); ++i) {
            record(r, gradient_rel_error(g.params.bias[i], central_difference(wt.bias[i], loss)), failed);
        }
        for (size_t i = 0; i < in.data.size(); ++i) {
            record(r, gradient_rel_error(g.input.data[i], central_difference(in.data[i], loss)), failed);
        }
        ++r.cases;
        r.failures += failed ? 1 : 0;
    }
    return r;
}

} // namespace

SparseTensor3 random_sparse_tensor(std::mt19937_64& rng, Shape3 shape, int channels, double density) {
    std::bernoulli_distribution active(density);
    std::uniform_real_distribution<double> value(-1.0, 1.0);
    std::vector<Site> sites;
    Coord3 p;
    for (p.h = 0; p.h < shape.h; ++p.h) {
        for (p.w = 0; p.w < shape.w; ++p.w) {
            for (p.l = 0; p.l < shape.l; ++p.l) {
                if (!active(rng)) {
                    continue;
                }
                Site s{p, {}};
                for (int c = 0; c < channels; ++c) {
                    double v = value(rng);
                    s.feature.push_back(v == 0.0 ? 0.5 : v);
                }
                sites.push_back(std::move(s));
            }
        }
    }
    return SparseTensor3::from_sites(shape, channels, sites);
}

ConvWeights random_conv_weights(std::mt19937_64& rng, int c_in, int32_t volume, int c_out, bool with_bias) {
    ConvWeights w(c_in, volume, c_out);
    std::uniform_real_distribution<double> value(-1.0, 1.0);
    for (double& v : w.weights) {
        v = value(rng);
    }
    if (with_bias) {
        for (double& v : w.bias) {
            v = value(rng);
        }
    }
    return w;
}

double gradient_rel_error(double analytic, double numeric) {
    const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / scale;
}

OracleReport check_oracle_equivalence(int cases, uint64_t seed, double tol) {
    OracleReport rep{{"oracle_equivalence", 0, 0, 0.0, tol}, {"submanifold_sparsity", 0, 0, 0.0, 0.0}};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dens(0.01, 0.2);
    for (int t = 0; t < cases; ++t) {
        const bool subm = (t % 2) == 1;
        int k = subm ? (uniform_int(rng, 0, 1) == 0 ? 1 : 3) : uniform_int(rng, 1, 3);
        int s = subm ? 1 : uniform_int(rng, 1, 2);
        // Standard convs need (d - k) divisible by s.
        auto dim = [&] { return k + s * uniform_int(rng, 0, (16 - k) / s); };
        Shape3 in{dim(), dim(), dim()};
        const int c_in = uniform_int(rng, 1, 4);
        const int c_out = uniform_int(rng, 1, 4);
        const auto act = (t % 4) < 2 ? ActivationKind::ReLU : ActivationKind::Identity;
        SparseTensor3 x = random_sparse_tensor(rng, in, c_in, dens(rng));
        ConvGeometry g{{k, k, k}, {s, s, s}, subm ? ConvMode::Submanifold : ConvMode::Standard, in};
        ConvWeights w = random_conv_weights(rng, c_in, g.volume(), c_out);

        SparseTensor3 y = sparse_conv_forward(x, g, w, act);
        DenseGrid4 ref = dense_conv3d_oracle(to_dense(x), g, w, act);
        double worst = 0.0;
        for (int32_t row = 0; row < y.active_count(); ++row) {
            const Coord3 p = y.index().key(row);
            for (int co = 0; co < c_out; ++co) {
                worst = std::max(worst, std::abs(y.features()(row, co) - ref.at(co, p)));
            }
        }
        rep.values.worst = std::max(rep.values.worst, worst);
        ++rep.values.cases;
        rep.values.failures += worst <= tol ? 0 : 1;

        if (subm) {
            bool same = y.active_count() == x.active_count();
            for (int32_t row = 0; same && row < x.active_count(); ++row) {
                same = y.index().contains(x.index().key(row));
            }
            ++rep.sparsity.cases;
            rep.sparsity.failures += same ? 0 : 1;
            rep.sparsity.worst = std::max(rep.sparsity.worst, same ? 0.0 : 1.0);
        }
    }
    return rep;
}

CheckReport check_adjointness(int cases, uint64_t seed, double tol) {
    CheckReport r{"adjointness", 0, 0, 0.0, tol};
    std::mt19937_64 rng(seed);
    for (int t = 0; t < cases; ++t) {
        const int k = uniform_int(rng, 1, 3);
        const int s = uniform_int(rng, 1, 2);
        Shape3 small{uniform_int(rng, 1, 5), uniform_int(rng, 1, 5), uniform_int(rng, 1, 5)};
        Shape3 big{(small.h - 1) * s + k, (small.w - 1) * s + k, (small.l - 1) * s + k};
        const int c_in = uniform_int(rng, 1, 4);
        const int c_out = uniform_int(rng, 1, 4);
        SparseTensor3 x = random_sparse_tensor(rng, big, c_in, 0.2);
        SparseTensor3 y = random_sparse_tensor(rng, small, c_out, 0.4);
        ConvWeights w = random_conv_weights(rng, c_in, k * k * k, c_out, false);
        ConvWeights wt(c_out, w.volume, c_in);
        for (int32_t off = 0; off < w.volume; ++off) {
            wt.slice(off) = w.slice(off).transpose();
        }
        SparseTensor3 cx =
            sparse_conv_forward(x, ConvGeometry{{k, k, k}, {s, s, s}, ConvMode::Standard, big}, w, ActivationKind::Identity);
        SparseTensor3 dy = sparse_deconv_forward(y, ConvGeometry{{k, k, k}, {s, s, s}, ConvMode::Transposed, small}, wt,
                                                 ActivationKind::Identity);
        double err = std::abs(dense_dot(cx, y) - dense_dot(x, dy));
        if (!(dy.shape() == big)) {
            err = INFINITY;
        }
        r.worst = std::max(r.worst, err);
        ++r.cases;
        r.failures += err <= tol ? 0 : 1;
    }
    return r;
}

CheckReport check_sparse_conv_gradients(int cases, uint64_t seed, double tol) {
    CheckReport r{"sparse_conv_gradients", 0, 0, 0.0, tol};
    std::mt19937_64 rng(seed);
    for (int t = 0; t < cases; ++t) {
        const ConvMode mode = t % 3 == 0 ? ConvMode::Submanifold : (t % 3 == 1 ? ConvMode::Standard : ConvMode::Transposed);
        const int k = mode == ConvMode::Submanifold ? 3 : uniform_int(rng, 2, 3);
        const int s = mode == ConvMode::Submanifold ? 1 : 2;
        const int d = mode == ConvMode::Transposed ? 3 : (k == 2 ? 6 : 5);
        Shape3 in{d, d, d};
        const int c_in = uniform_int(rng, 1, 3);
        const int c_out = uniform_int(rng, 1, 3);
        SparseTensor3 x = random_sparse_tensor(rng, in, c_in, 0.3);
        ConvGeometry g{{k, k, k}, {s, s, s}, mode, in};
        ConvWeights w = random_conv_weights(rng, c_in, g.volume(), c_out);
        RuleBook rb = build_rulebook(x.index_ptr(), g);
        FeatureMatrix up = FeatureMatrix::Zero(rb.out_count(), c_out);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (Eigen::Index i = 0; i < up.size(); ++i) {
            up.data()[i] = u(rng);
        }
        FeatureMatrix input = x.features();
        auto loss = [&] {
            FeatureMatrix out = apply_rules(input, rb, w);
            add_bias_activate(out, w.bias, ActivationKind::Identity);
            return (out.array() * up.array()).sum();
        };
        ConvGrads grads = sparse_conv_backward(input, rb, w, up);
        bool failed = false;
        for (size_t i = 0; i < w.weights.size(); ++i) {
            record(r, gradient_rel_error(grads.params.weights[i], central_difference(w.weights[i], loss)), failed);
        }
        for (size_t i = 0; i < w.bias.size(); ++i) {
            record(r, gradient_rel_error(grads.params.bias[i], central_difference(w.bias[i], loss)), failed);
        }
        for (Eigen::Index i = 0; i < input.size(); ++i) {
            record(r, gradient_rel_error(grads.input.data()[i], central_difference(input.data()[i], loss)), failed);
        }
        ++r.cases;
        r.failures += failed ? 1 : 0;
    }
    return r;
}

CheckReport check_conv2d_gradients(int cases, uint64_t seed, double tol) {
    return check_dense_gradients("conv2d_gradients", false, cases, seed, tol);
}

CheckReport check_deconv2d_gradients(int cases, uint64_t seed, double tol) {
    return check_dense_gradients("deconv2d_gradients", true, cases, seed, tol);
}

CheckReport check_loss_gradients(int cases, uint64_t seed, double tol) {
    CheckReport r{"loss_gradients", 0, 0, 0.0, tol};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0.5, 5.5);
    std::uniform_real_distribution<double> uy(-2.5, 2.5);
    std::uniform_real_distribution<double> ut(-3.14, 3.14);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < cases; ++t) {
        AnchorConfig ac;
        ac.x_max = 6.0;
        ac.y_min = -3.0;
        ac.y_max = 3.0;
        ac.grid_w = 6;
        ac.grid_l = 6;
        AnchorSet anchors = generate_anchors(ac);
        std::vector<Box3D> gts;
        const int n_gt = uniform_int(rng, 1, 3);
        for (int g = 0; g < n_gt; ++g) {
            gts.push_back({ux(rng), uy(rng), -2.5, 3.5 + n(rng) * 0.2, 1.6, 1.5, ut(rng)});
        }
        Assignment asg = assign_targets(anchors, gts);
        LossConfig lc;
        lc.gamma = t % 3 == 0 ? 0.0 : 2.0;
        HeadOutput head;
        head.per_cell = anchors.per_cell;
        head.cls = Map2D(anchors.per_cell, 6, 6);
        head.reg = Map2D(7 * anchors.per_cell, 6, 6);
        head.dir = Map2D(2 * anchors.per_cell, 6, 6);
        for (auto* m : {&head.cls, &head.reg, &head.dir}) {
            for (double& v : m->data) {
                v = 1.5 * n(rng);
            }
        }
        HeadLoss hl = head_loss(head, asg, lc);
        auto loss = [&] { return head_loss(head, asg, lc).total; };
        bool failed = false;
        for (auto [m, g] : {std::pair{&head.cls, &hl.grad.cls}, std::pair{&head.reg, &hl.grad.reg},
                            std::pair{&head.dir, &hl.grad.dir}}) {
            for (size_t i = 0; i < m->data.size(); ++i) {
                record(r, gradient_rel_error(g->data[i], central_difference(m->data[i], loss)), failed);
            }
        }
        ++r.cases;
        r.failures += failed ? 1 : 0;
    }
    return r;
}

std::vector<CheckReport> run_selfcheck(bool quick) {
    const int scale = quick ? 1 : 5;
    std::vector<CheckReport> out;
    OracleReport o = check_oracle_equivalence(100 * scale, 1);
    out.push_back(o.values);
    out.push_back(o.sparsity);
    out.push_back(check_adjointness(20 * scale, 2));
    out.push_back(check_sparse_conv_gradients(10 * scale, 3));
    out.push_back(check_conv2d_gradients(10 * scale, 4));
    out.push_back(check_deconv2d_gradients(10 * scale, 5));
    out.push_back(check_loss_gradients(10 * scale, 6));
    return out;
}

std::string format_check(const CheckReport& r) {
    return fmt::format("{} cases={} failures={} worst={:.3e} tol={:.1e} {}", r.name, r.cases, r.failures, r.worst,
                       r.tolerance, r.passed() ? "PASS" : "FAIL");
}

} // namespace sp3d
