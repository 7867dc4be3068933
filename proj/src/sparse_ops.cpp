// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/sparse_ops.hpp"

#include "sp3d/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace sp3d {

void init_he_normal(ConvWeights& w, std::mt19937_64& rng) {
    double stddev = std::sqrt(2.0 / static_cast<double>(w.c_in * w.volume));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : w.weights) {
        v = dist(rng);
    }
    std::fill(w.bias.begin(), w.bias.end(), 0.0);
}

ConvGeometry make_geometry(const SparseTensor3& t, Shape3 kernel, Shape3 stride, ConvMode mode) {
    return ConvGeometry{kernel, stride, mode, t.shape()};
}

namespace {

void check_conv_inputs(const SparseTensor3& t, const RuleBook& rb, const ConvWeights& w) {
    if (t.channels() != w.c_in) {
        throw Error(fmt::format("sparse conv: input has {} channels, weights expect {}", t.channels(), w.c_in));
    }
    if (w.volume != rb.geometry.volume()) {
        throw Error("sparse conv: weight volume does not match kernel");
    }
    if (t.shape() != rb.geometry.in_shape || t.active_count() != rb.in_count) {
        throw Error("sparse conv: rule book was built for a different input");
    }
}

} // namespace

FeatureMatrix apply_rules(const FeatureMatrix& input, const RuleBook& rb, const ConvWeights& w) {
    FeatureMatrix out = FeatureMatrix::Zero(rb.out_count(), w.c_out);
    FeatureMatrix staging;
    FeatureMatrix product;
    for (int32_t id = 0; id < rb.geometry.volume(); ++id) {
        const OffsetRules& r = rb.rules[static_cast<size_t>(id)];
        const auto n = static_cast<Eigen::Index>(r.size());
        if (n == 0) {
            continue;
        }
        staging.resize(n, w.c_in);
        for (Eigen::Index p = 0; p < n; ++p) {
            staging.row(p) = input.row(r.in_rows[static_cast<size_t>(p)]);
        }
        product.noalias() = staging * w.slice(id);
        for (Eigen::Index p = 0; p < n; ++p) {
            out.row(r.out_rows[static_cast<size_t>(p)]) += product.row(p);
        }
    }
    return out;
}

void add_bias_activate(FeatureMatrix& m, const std::vector<double>& bias, ActivationKind act) {
    for (Eigen::Index row = 0; row < m.rows(); ++row) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(row, c) = activate(m(row, c) + bias[static_cast<size_t>(c)], act);
        }
    }
}

SparseTensor3 sparse_conv_forward(const SparseTensor3& t, const RuleBook& rb, const ConvWeights& w,
                                  ActivationKind act) {
    check_conv_inputs(t, rb, w);
    FeatureMatrix out = apply_rules(t.features(), rb, w);
    add_bias_activate(out, w.bias, act);
    return SparseTensor3(rb.out_shape, rb.out_index, std::move(out));
}

SparseTensor3 sparse_conv_forward(const SparseTensor3& t, const ConvGeometry& g, const ConvWeights& w,
                                  ActivationKind act) {
    if (t.channels() != w.c_in) {
        throw Error(fmt::format("sparse conv: input has {} channels, weights expect {}", t.channels(), w.c_in));
    }
    if (g.in_shape != t.shape()) {
        throw Error("sparse conv: geometry input shape differs from tensor shape");
    }
    return sparse_conv_forward(t, build_rulebook(t.index_ptr(), g), w, act);
}

SparseTensor3 sparse_deconv_forward(const SparseTensor3& t, const ConvGeometry& g, const ConvWeights& w,
                                    ActivationKind act) {
    if (g.mode != ConvMode::Transposed) {
        throw Error("sparse_deconv_forward: geometry must be Transposed");
    }
    return sparse_conv_forward(t, g, w, act);
}

DenseGrid4 dense_conv3d_oracle(const DenseGrid4& input, const ConvGeometry& g, const ConvWeights& w,
                               ActivationKind act) {
    if (input.channels != w.c_in || input.shape != g.in_shape) {
        throw Error("dense_conv3d_oracle: input does not match geometry/weights");
    }
    Shape3 out_shape = output_shape(g);
    DenseGrid4 out(w.c_out, out_shape);
    Coord3 o;
    Coord3 off;
    for (o.h = 0; o.h < out_shape.h; ++o.h) {
        for (o.w = 0; o.w < out_shape.w; ++o.w) {
            for (o.l = 0; o.l < out_shape.l; ++o.l) {
                for (off.h = 0; off.h < g.kernel.h; ++off.h) {
                    for (off.w = 0; off.w < g.kernel.w; ++off.w) {
                        for (off.l = 0; off.l < g.kernel.l; ++off.l) {
                            // Input site feeding output o through this offset.
                            Coord3 p;
                            bool valid = true;
                            for (int axis = 0; axis < 3; ++axis) {
                                int32_t s = g.stride[axis];
                                switch (g.mode) {
                                case ConvMode::Standard:
                                    p[axis] = o[axis] * s + off[axis];
                                    break;
                                case ConvMode::Submanifold:
                                    p[axis] = o[axis] + off[axis] - (g.kernel[axis] - 1) / 2;
                                    break;
                                case ConvMode::Transposed: {
                                    int32_t num = o[axis] - off[axis];
                                    if (num < 0 || num % s != 0) {
                                        valid = false;
                                    }
                                    p[axis] = num / s;
                                    break;
                                }
                                }
                            }
                            if (!valid || !g.in_shape.contains(p)) {
                                continue;
                            }
                            int32_t id = g.offset_id(off);
                            for (int co = 0; co < w.c_out; ++co) {
                                double acc = 0.0;
                                for (int ci = 0; ci < w.c_in; ++ci) {
                                    acc += input.at(ci, p) * w.at(ci, id, co);
                                }
                                out.at(co, o) += acc;
                            }
                        }
                    }
                }
                for (int co = 0; co < w.c_out; ++co) {
                    out.at(co, o) = activate(out.at(co, o) + w.bias[static_cast<size_t>(co)], act);
                }
            }
        }
    }
    return out;
}

SparseTensor3 residual_add(const SparseTensor3& a, const SparseTensor3& b) {
    if (a.channels() != b.channels() || !a.same_sites(b)) {
        throw Error("residual_add: operands differ in shape, channels or active sites");
    }
    return a.with_features(a.features() + b.features());
}

SparseTensor3 concat_channels(const SparseTensor3& a, const SparseTensor3& b) {
    if (!a.same_sites(b)) {
        throw Error("concat_channels: operands differ in shape or active sites");
    }
    FeatureMatrix joined(a.active_count(), a.channels() + b.channels());
    joined << a.features(), b.features();
    return SparseTensor3(a.shape(), a.index_ptr(), std::move(joined));
}

SparseTensor3 project_onto(const SparseTensor3& t, const IndexPtr& target, Shape3 target_shape) {
    if (t.shape().h > target_shape.h || t.shape().w > target_shape.w || t.shape().l > target_shape.l) {
        throw Error("project_onto: source grid does not fit the target grid");
    }
    FeatureMatrix rows = FeatureMatrix::Zero(target->size(), t.channels());
    const auto& keys = target->keys();
    for (int32_t row = 0; row < target->size(); ++row) {
        int32_t src = t.index().row_of(keys[static_cast<size_t>(row)]);
        if (src >= 0) {
            rows.row(row) = t.features().row(src);
        }
    }
    return SparseTensor3(target_shape, target, std::move(rows));
}

ConvGeometry compress_geometry(const Shape3& in_shape) {
    return ConvGeometry{{in_shape.h, 1, 1}, {in_shape.h, 1, 1}, ConvMode::Standard, in_shape};
}

Map2D densify_bev(const SparseTensor3& t) {
    if (t.shape().h != 1) {
        throw Error("densify_bev: tensor height must be 1");
    }
    Map2D map(t.channels(), t.shape().w, t.shape().l);
    const auto& keys = t.index().keys();
    for (int32_t row = 0; row < t.active_count(); ++row) {
        const Coord3& c = keys[static_cast<size_t>(row)];
        for (int ch = 0; ch < t.channels(); ++ch) {
            map.at(ch, c.w, c.l) = t.features()(row, ch);
        }
    }
    return map;
}

Map2D compress_to_2d(const SparseTensor3& t, const ConvWeights& w, ActivationKind act) {
    if (w.volume != t.shape().h) {
        throw Error(fmt::format("compress_to_2d: kernel height {} does not match tensor height {}", w.volume,
                                t.shape().h));
    }
    return densify_bev(sparse_conv_forward(t, compress_geometry(t.shape()), w, act));
}

ConvGrads sparse_conv_backward(const FeatureMatrix& input, const RuleBook& rb, const ConvWeights& w,
                               const FeatureMatrix& grad_out) {
    if (input.rows() != rb.in_count || input.cols() != w.c_in) {
        throw Error("sparse_conv_backward: input features do not match rule book / weights");
    }
    if (grad_out.rows() != rb.out_count() || grad_out.cols() != w.c_out) {
        throw Error("sparse_conv_backward: upstream gradient shape mismatch");
    }
    ConvGrads g{w.zeros_like(), FeatureMatrix::Zero(input.rows(), input.cols())};
    FeatureMatrix in_stage;
    FeatureMatrix up_stage;
    FeatureMatrix back;
    for (int32_t id = 0; id < rb.geometry.volume(); ++id) {
        const OffsetRules& r = rb.rules[static_cast<size_t>(id)];
        const auto n = static_cast<Eigen::Index>(r.size());
        if (n == 0) {
            continue;
        }
        in_stage.resize(n, w.c_in);
        up_stage.resize(n, w.c_out);
        for (Eigen::Index p = 0; p < n; ++p) {
            in_stage.row(p) = input.row(r.in_rows[static_cast<size_t>(p)]);
            up_stage.row(p) = grad_out.row(r.out_rows[static_cast<size_t>(p)]);
        }
        g.params.slice(id).noalias() = in_stage.transpose() * up_stage;
        back.noalias() = up_stage * w.slice(id).transpose();
        for (Eigen::Index p = 0; p < n; ++p) {
            g.input.row(r.in_rows[static_cast<size_t>(p)]) += back.row(p);
        }
    }
    for (int co = 0; co < w.c_out; ++co) {
        g.params.bias[static_cast<size_t>(co)] = grad_out.col(co).sum();
    }
    return g;
}

FeatureMatrix relu_backward(const FeatureMatrix& output, const FeatureMatrix& grad) {
    if (output.rows() != grad.rows() || output.cols() != grad.cols()) {
        throw Error("relu_backward: shape mismatch");
    }
    return (output.array() > 0.0).select(grad, 0.0);
}

} // namespace sp3d
