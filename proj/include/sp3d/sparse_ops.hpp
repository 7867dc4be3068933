// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Gather / multiply / scatter evaluation of sparse 3D convolutions, the
// channel and residual helpers used by the backbones, and the dense
// brute-force oracle everything is checked against.
//
#pragma once

#include "sp3d/conv2d.hpp"
#include "sp3d/rulebook.hpp"
#include "sp3d/sparse_tensor.hpp"
#include "sp3d/weights.hpp"

namespace sp3d {

/// Convenience: geometry for convolving `t` with the given kernel.
ConvGeometry make_geometry(const SparseTensor3& t, Shape3 kernel, Shape3 stride, ConvMode mode);

/// M_out = sum over offsets of scatter(gather(M_in) * W^(offset)), before bias.
/// Offsets are visited in row-major order and pairs in rule book order, so
/// the result is bit-reproducible.
FeatureMatrix apply_rules(const FeatureMatrix& input, const RuleBook& rb, const ConvWeights& w);

/// Adds the bias to every row, then applies the activation in place.
void add_bias_activate(FeatureMatrix& m, const std::vector<double>& bias, ActivationKind act);

SparseTensor3 sparse_conv_forward(const SparseTensor3& t, const RuleBook& rb, const ConvWeights& w,
                                  ActivationKind act);
SparseTensor3 sparse_conv_forward(const SparseTensor3& t, const ConvGeometry& g, const ConvWeights& w,
                                  ActivationKind act);

/// Transposed convolution; `g.mode` must be Transposed. Uses the same loop as
/// the forward pass over the transposed rule book.
SparseTensor3 sparse_deconv_forward(const SparseTensor3& t, const ConvGeometry& g, const ConvWeights& w,
                                    ActivationKind act);

/// Naive full-grid convolution treating inactive sites as zero. Bias and
/// activation are applied at every output site, so only sparse-active sites
/// are comparable with the sparse result.
DenseGrid4 dense_conv3d_oracle(const DenseGrid4& input, const ConvGeometry& g, const ConvWeights& w,
                               ActivationKind act);

/// Element-wise sum. Both operands must share shape, channels and index.
SparseTensor3 residual_add(const SparseTensor3& a, const SparseTensor3& b);

/// Per-site channel concatenation [a | b]. Both operands must share the index.
SparseTensor3 concat_channels(const SparseTensor3& a, const SparseTensor3& b);

/// Re-expresses `t` on the target index: rows of sites active in both are
/// copied, target-only sites get zero rows, sites missing from the target are
/// dropped. `t.shape()` must fit inside `target_shape`.
SparseTensor3 project_onto(const SparseTensor3& t, const IndexPtr& target, Shape3 target_shape);

/// Geometry of the (d, 1, 1) height-collapsing convolution.
ConvGeometry compress_geometry(const Shape3& in_shape);

/// Dense BEV map of a height-1 sparse tensor; inactive cells are zero.
Map2D densify_bev(const SparseTensor3& t);

/// Collapses height with one (d, 1, 1) convolution of stride (d, 1, 1) and
/// densifies the result to c_out x w x l.
Map2D compress_to_2d(const SparseTensor3& t, const ConvWeights& w, ActivationKind act = ActivationKind::Identity);

struct ConvGrads {
    ConvWeights params;  // gradient w.r.t. weights and bias
    FeatureMatrix input; // gradient w.r.t. input feature rows
};

/// Backward pass of apply_rules + bias given d(loss)/d(pre-activation output).
ConvGrads sparse_conv_backward(const FeatureMatrix& input, const RuleBook& rb, const ConvWeights& w,
                               const FeatureMatrix& grad_out);

/// Masks `grad` where the stored ReLU output is not positive (subgradient 0).
FeatureMatrix relu_backward(const FeatureMatrix& output, const FeatureMatrix& grad);

} // namespace sp3d
