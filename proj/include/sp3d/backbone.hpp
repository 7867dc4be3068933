// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Sparse 3D backbones (bottom-up, and bottom-up plus top-down) and the dense
// 2D fusion network that turns the per-level BEV maps into head outputs.
//
// Layer names in the parameter store:
//   entry                      submanifold k3, c_0 -> c_1
//   L<i>.b<j>.conv0 / conv1    residual block convs at level i
//   down<i>                    k3 s2 conv from level i-1 to level i
//   up<i> / fuse<i>            top-down deconv into level i and its merge conv
//   compress<i>                (h_i, 1, 1) height collapse
//   fusion.down1 / up3 / up4   resampling onto the level-2 grid
//   fusion.conv<k>             three 3x3 convs after concatenation
//   head.cls / head.reg / head.dir
//
#pragma once

#include "sp3d/conv2d.hpp"
#include "sp3d/detection.hpp"
#include "sp3d/params.hpp"
#include "sp3d/rulebook.hpp"
#include "sp3d/sparse_tensor.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sp3d {

enum class BackboneVariant { BottomUp, TopDown };

std::string_view to_string(BackboneVariant v);
BackboneVariant backbone_variant_from_string(std::string_view name);

struct BackboneConfig {
    BackboneVariant variant = BackboneVariant::TopDown;
    int in_channels = 128;
    std::vector<int> channels{64, 80, 96, 128};
    std::vector<int> out_channels{128, 128, 128, 128};
    int blocks_per_level = 2;
    int fusion_channels = 128;
    int anchors_per_cell = 4;
    double cls_prior = 0.01;

    int levels() const { return static_cast<int>(channels.size()); }
    void validate() const;
};

/// Level shapes obtained from the level-1 shape by k=3, s=2 convolutions.
std::vector<Shape3> level_shapes(Shape3 level1, int levels);

/// Adds every backbone and fusion layer for inputs of shape `level1`.
void add_model_layers(ParamStore& store, const BackboneConfig& cfg, Shape3 level1);

/// He-normal weights; the classification head bias starts at the logit of
/// `cls_prior`.
void init_model(ParamStore& store, const BackboneConfig& cfg, std::mt19937_64& rng);

/// One recorded sparse convolution: enough to run its backward pass.
struct SparseStep {
    std::string layer;
    std::shared_ptr<const RuleBook> rb;
    FeatureMatrix input;
    FeatureMatrix output; // after activation
    ActivationKind act = ActivationKind::Identity;
};

struct DenseStep {
    std::string layer;
    Conv2dSpec spec;
    bool transposed = false;
    Map2D input;
    Map2D output;
    ActivationKind act = ActivationKind::Identity;
};

struct BackboneCache {
    struct Block {
        SparseStep conv0;
        SparseStep conv1;
        FeatureMatrix output;
    };
    struct Level {
        std::optional<SparseStep> down;
        std::vector<Block> blocks;
    };
    struct TopDown {
        SparseStep deconv;
        std::vector<int32_t> source_rows; // projected row -> deconv output row, -1 if absent
        int32_t deconv_rows = 0;
        int lateral_channels = 0;
        SparseStep fuse;
    };
    struct Compress {
        SparseStep conv;
        IndexPtr out_index;
    };
    SparseStep entry;
    std::vector<Level> levels;
    std::vector<TopDown> topdown; // entry i merges level i+1 into level i
    std::vector<Compress> compress;
};

/// Bottom-up path: per-level residual submanifold blocks with stride-2 convs
/// between levels, each level compressed to a BEV map.
std::vector<Map2D> forward_3dbn1(const SparseTensor3& t, const BackboneConfig& cfg, const ParamStore& store,
                                 BackboneCache* cache = nullptr);

/// Bottom-up path plus a top-down path of sparse deconvolutions merged into
/// each lateral level before compression.
std::vector<Map2D> forward_3dbn2(const SparseTensor3& t, const BackboneConfig& cfg, const ParamStore& store,
                                 BackboneCache* cache = nullptr);

/// Dispatches on cfg.variant.
std::vector<Map2D> forward_backbone(const SparseTensor3& t, const BackboneConfig& cfg, const ParamStore& store,
                                    BackboneCache* cache = nullptr);

/// Accumulates parameter gradients into `grads` given d(loss)/d(maps).
void backward_backbone(const BackboneCache& cache, const BackboneConfig& cfg, const ParamStore& store,
                       std::span<const Map2D> grad_maps, ParamStore& grads);

struct FusionCache {
    DenseStep down1;
    DenseStep up3;
    DenseStep up4;
    std::vector<int> parts; // channel split of the concatenation
    std::vector<DenseStep> convs;
    DenseStep cls;
    DenseStep reg;
    DenseStep dir;
};

/// Resamples levels 1, 3, 4 onto the level-2 grid, concatenates, applies the
/// three 3x3 convs and the three 1x1 heads (logits, no activation).
HeadOutput fusion_forward(std::span<const Map2D> maps, const BackboneConfig& cfg, const ParamStore& store,
                          FusionCache* cache = nullptr);

/// Returns d(loss)/d(maps) and accumulates parameter gradients.
std::vector<Map2D> fusion_backward(const FusionCache& cache, const ParamStore& store, const HeadOutput& grad,
                                   ParamStore& grads);

struct ModelCache {
    BackboneCache backbone;
    FusionCache fusion;
};

HeadOutput model_forward(const SparseTensor3& t, const BackboneConfig& cfg, const ParamStore& store,
                         ModelCache* cache = nullptr);

/// Gradients of all parameters given d(loss)/d(head logits).
ParamStore model_backward(const ModelCache& cache, const BackboneConfig& cfg, const ParamStore& store,
                          const HeadOutput& grad);

/// One line per layer: name, kind, channels, kernel, stride, parameter count.
std::string graph_summary(const ParamStore& store);

} // namespace sp3d
