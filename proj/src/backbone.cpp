// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/backbone.hpp"

#include "sp3d/error.hpp"
#include "sp3d/sparse_ops.hpp"

#include <fmt/format.h>

#include <cmath>

namespace sp3d {

namespace {

constexpr Shape3 kUnit{1, 1, 1};
constexpr Shape3 kCube3{3, 3, 3};
constexpr Shape3 kCube2{2, 2, 2};
constexpr Shape3 kStride2{2, 2, 2};

std::string block_name(int level, int block, int conv) { return fmt::format("L{}.b{}.conv{}", level, block, conv); }

ConvMode conv_mode(LayerKind kind) {
    switch (kind) {
    case LayerKind::Standard:
        return ConvMode::Standard;
    case LayerKind::Submanifold:
        return ConvMode::Submanifold;
    case LayerKind::Transposed:
        return ConvMode::Transposed;
    default:
        throw Error(fmt::format("layer kind '{}' is not a sparse convolution", to_string(kind)));
    }
}

std::shared_ptr<const RuleBook> rulebook_for(const SparseTensor3& t, const Layer& layer) {
    ConvGeometry g{layer.kernel, layer.stride, conv_mode(layer.kind), t.shape()};
    return std::make_shared<const RuleBook>(build_rulebook(t.index_ptr(), g));
}

SparseTensor3 run_sparse(const SparseTensor3& t, const Layer& layer, std::shared_ptr<const RuleBook> rb,
                         ActivationKind act, SparseStep* rec) {
    if (!rb) {
        rb = rulebook_for(t, layer);
    }
    SparseTensor3 out = sparse_conv_forward(t, *rb, layer.w, act);
    if (rec != nullptr) {
        rec->layer = layer.name;
        rec->rb = std::move(rb);
        rec->input = t.features();
        rec->output = out.features();
        rec->act = act;
    }
    return out;
}

void accumulate(ConvWeights& into, const ConvWeights& g) {
    for (size_t i = 0; i < into.weights.size(); ++i) {
        into.weights[i] += g.weights[i];
    }
    for (size_t i = 0; i < into.bias.size(); ++i) {
        into.bias[i] += g.bias[i];
    }
}

// Takes d(loss)/d(activated output), returns d(loss)/d(input rows).
FeatureMatrix back_sparse(const SparseStep& s, const FeatureMatrix& grad_out, const ParamStore& store,
                          ParamStore& grads) {
    FeatureMatrix g = s.act == ActivationKind::ReLU ? relu_backward(s.output, grad_out) : grad_out;
    ConvGrads cg = sparse_conv_backward(s.input, *s.rb, store.get(s.layer).w, g);
    accumulate(grads.get(s.layer).w, cg.params);
    return std::move(cg.input);
}

Map2D run_dense(const Map2D& in, const Layer& layer, int pad, bool transposed, ActivationKind act,
                DenseStep* rec) {
    Conv2dSpec spec{layer.kernel.w, layer.stride.w, pad};
    Map2D out = transposed ? dense_deconv2d(in, spec, layer.w, act) : dense_conv2d(in, spec, layer.w, act);
    if (rec != nullptr) {
        rec->layer = layer.name;
        rec->spec = spec;
        rec->transposed = transposed;
        rec->input = in;
        rec->output = out;
        rec->act = act;
    }
    return out;
}

Map2D back_dense(const DenseStep& s, const Map2D& grad_out, const ParamStore& store, ParamStore& grads) {
    Map2D g = s.act == ActivationKind::ReLU ? relu_backward(s.output, grad_out) : grad_out;
    const ConvWeights& w = store.get(s.layer).w;
    Conv2dGrads cg = s.transposed ? dense_deconv2d_backward(s.input, s.spec, w, g)
                                  : dense_conv2d_backward(s.input, s.spec, w, g);
    accumulate(grads.get(s.layer).w, cg.params);
    return std::move(cg.input);
}

Map2D add_maps(Map2D a, const Map2D& b) {
    for (size_t i = 0; i < a.data.size(); ++i) {
        a.data[i] += b.data[i];
    }
    return a;
}

// Bottom-up pass shared by both variants; returns the final tensor of each level.
std::vector<SparseTensor3> bottom_up(const SparseTensor3& t, const BackboneConfig& cfg, const ParamStore& store,
                                     BackboneCache* cache) {
    cfg.validate();
    if (t.channels() != cfg.in_channels) {
        throw Error(fmt::format("backbone expects {} input channels, got {}", cfg.in_channels, t.channels()));
    }
    if (cache != nullptr) {
        cache->levels.assign(static_cast<size_t>(cfg.levels()), {});
    }
    std::vector<SparseTensor3> levels;
    SparseTensor3 a = run_sparse(t, store.get("entry"), nullptr, ActivationKind::ReLU,
                                 cache ? &cache->entry : nullptr);
    for (int i = 0; i < cfg.levels(); ++i) {
        BackboneCache::Level* rec = cache ? &cache->levels[static_cast<size_t>(i)] : nullptr;
        if (i > 0) {
            if (rec != nullptr) {
                rec->down.emplace();
            }
            a = run_sparse(a, store.get(fmt::format("down{}", i)), nullptr, ActivationKind::ReLU,
                           rec ? &*rec->down : nullptr);
        }
        // Every block at this level shares one submanifold rule book.
        std::shared_ptr<const RuleBook> rb;
        if (cfg.blocks_per_level > 0) {
            rb = rulebook_for(a, store.get(block_name(i, 0, 0)));
        }
        for (int b = 0; b < cfg.blocks_per_level; ++b) {
            BackboneCache::Block* brec = nullptr;
            if (rec != nullptr) {
                rec->blocks.emplace_back();
                brec = &rec->blocks.back();
            }
            SparseTensor3 h = run_sparse(a, store.get(block_name(i, b, 0)), rb, ActivationKind::ReLU,
                                         brec ? &brec->conv0 : nullptr);
            SparseTensor3 o = run_sparse(h, store.get(block_name(i, b, 1)), rb, ActivationKind::Identity,
                                         brec ? &brec->conv1 : nullptr);
            a = a.with_features(residual_add(a, o).features().cwiseMax(0.0));
            if (brec != nullptr) {
                brec->output = a.features();
            }
        }
        levels.push_back(a);
    }
    return levels;
}

std::vector<Map2D> compress_levels(const std::vector<SparseTensor3>& levels, const ParamStore& store,
                                   BackboneCache* cache) {
    std::vector<Map2D> maps;
    if (cache != nullptr) {
        cache->compress.assign(levels.size(), {});
    }
    for (size_t i = 0; i < levels.size(); ++i) {
        BackboneCache::Compress* rec = cache ? &cache->compress[i] : nullptr;
        SparseTensor3 flat = run_sparse(levels[i], store.get(fmt::format("compress{}", i)), nullptr,
                                        ActivationKind::ReLU, rec ? &rec->conv : nullptr);
        if (rec != nullptr) {
            rec->out_index = flat.index_ptr();
        }
        maps.push_back(densify_bev(flat));
    }
    return maps;
}

} // namespace

std::string_view to_string(BackboneVariant v) { return v == BackboneVariant::BottomUp ? "3dbn1" : "3dbn2"; }

BackboneVariant backbone_variant_from_string(std::string_view name) {
    if (name == "3dbn1") {
        return BackboneVariant::BottomUp;
    }
    if (name == "3dbn2") {
        return BackboneVariant::TopDown;
    }
    throw ConfigError(fmt::format("unknown backbone variant '{}' (expected 3dbn1 or 3dbn2)", name));
}

void BackboneConfig::validate() const {
    if (channels.empty() || channels.size() != out_channels.size()) {
        throw ConfigError("backbone: channels and out_channels must be non-empty and of equal length");
    }
    for (size_t i = 0; i < channels.size(); ++i) {
        if (channels[i] <= 0 || out_channels[i] <= 0) {
            throw ConfigError("backbone: channel counts must be positive");
        }
    }
    if (in_channels <= 0 || blocks_per_level < 0 || fusion_channels <= 0 || anchors_per_cell <= 0) {
        throw ConfigError("backbone: in_channels, fusion_channels and anchors_per_cell must be positive");
    }
    if (!(cls_prior > 0.0 && cls_prior < 1.0)) {
        throw ConfigError("backbone: cls_prior must lie in (0, 1)");
    }
}

std::vector<Shape3> level_shapes(Shape3 level1, int levels) {
    std::vector<Shape3> out{level1};
    for (int i = 1; i < levels; ++i) {
        ConvGeometry g{kCube3, kStride2, ConvMode::Standard, out.back()};
        validate(g);
        out.push_back(output_shape(g));
    }
    return out;
}

void add_model_layers(ParamStore& store, const BackboneConfig& cfg, Shape3 level1) {
    cfg.validate();
    const int n = cfg.levels();
    auto shapes = level_shapes(level1, n);
    const auto& c = cfg.channels;
    store.add("entry", LayerKind::Submanifold, cfg.in_channels, c[0], kCube3, kUnit);
    for (int i = 0; i < n; ++i) {
        if (i > 0) {
            store.add(fmt::format("down{}", i), LayerKind::Standard, c[i - 1], c[i], kCube3, kStride2);
        }
        for (int b = 0; b < cfg.blocks_per_level; ++b) {
            store.add(block_name(i, b, 0), LayerKind::Submanifold, c[i], c[i], kCube3, kUnit);
            store.add(block_name(i, b, 1), LayerKind::Submanifold, c[i], c[i], kCube3, kUnit);
        }
    }
    if (cfg.variant == BackboneVariant::TopDown) {
        for (int i = n - 2; i >= 0; --i) {
            store.add(fmt::format("up{}", i), LayerKind::Transposed, c[i + 1], c[i], kCube2, kStride2);
            store.add(fmt::format("fuse{}", i), LayerKind::Submanifold, 2 * c[i], c[i], kCube3, kUnit);
        }
    }
    for (int i = 0; i < n; ++i) {
        Shape3 k{shapes[static_cast<size_t>(i)].h, 1, 1};
        store.add(fmt::format("compress{}", i), LayerKind::Standard, c[i], cfg.out_channels[static_cast<size_t>(i)],
                  k, k);
    }
    if (n != 4) {
        return;
    }
    const auto& o = cfg.out_channels;
    const int f = cfg.fusion_channels;
    const int a = cfg.anchors_per_cell;
    store.add("fusion.down1", LayerKind::Conv2d, o[0], o[0], {1, 3, 3}, {1, 2, 2});
    store.add("fusion.up3", LayerKind::Deconv2d, o[2], o[2], {1, 3, 3}, {1, 2, 2});
    store.add("fusion.up4", LayerKind::Deconv2d, o[3], o[3], {1, 7, 7}, {1, 4, 4});
    int cat = o[0] + o[1] + o[2] + o[3];
    for (int k = 0; k < 3; ++k) {
        store.add(fmt::format("fusion.conv{}", k), LayerKind::Conv2d, k == 0 ? cat : f, f, {1, 3, 3}, kUnit);
    }
    store.add("head.cls", LayerKind::Conv2d, f, a, kUnit, kUnit);
    store.add("head.reg", LayerKind::Conv2d, f, 7 * a, kUnit, kUnit);
    store.add("head.dir", LayerKind::Conv2d, f, 2 * a, kUnit, kUnit);
}

void init_model(ParamStore& store, const BackboneConfig& cfg, std::mt19937_64& rng) {
    store.init_he(rng);
    if (store.contains("head.cls")) {
        double b = -std::log((1.0 - cfg.cls_prior) / cfg.cls_prior);
        auto& bias = store.get("head.cls").w.bias;
        std::fill(bias.begin(), bias.end(), b);
    }
}

std::vector<Map2D> forward_3dbn1(const SparseTensor3& t, const BackboneConfig& cfg, const ParamStore& store,
                                 BackboneCache* cache) {
    if (cache != nullptr) {
        cache->topdown.clear();
    }
    return compress_levels(bottom_up(t, cfg, store, cache), store, cache);
}

std::vector<Map2D> forward_3dbn2(const SparseTensor3& t, const BackboneConfig& cfg, const ParamStore& store,
                                 BackboneCache* cache) {
    auto levels = bottom_up(t, cfg, store, cache);
    const int n = cfg.levels();
    if (cache != nullptr) {
        cache->topdown.assign(static_cast<size_t>(std::max(0, n - 1)), {});
    }
    std::vector<SparseTensor3> fused = levels;
    for (int i = n - 2; i >= 0; --i) {
        BackboneCache::TopDown* rec = cache ? &cache->topdown[static_cast<size_t>(i)] : nullptr;
        const SparseTensor3& lateral = levels[static_cast<size_t>(i)];
        SparseTensor3 up = run_sparse(fused[static_cast<size_t>(i + 1)], store.get(fmt::format("up{}", i)), nullptr,
                                      ActivationKind::Identity, rec ? &rec->deconv : nullptr);
        SparseTensor3 projected = project_onto(up, lateral.index_ptr(), lateral.shape());
        SparseTensor3 merged = concat_channels(lateral, projected);
        fused[static_cast<size_t>(i)] = run_sparse(merged, store.get(fmt::format("fuse{}", i)), nullptr,
                                                   ActivationKind::ReLU, rec ? &rec->fuse : nullptr);
        if (rec != nullptr) {
            rec->deconv_rows = up.active_count();
            rec->lateral_channels = lateral.channels();
            rec->source_rows.resize(static_cast<size_t>(lateral.active_count()));
            for (int32_t r = 0; r < lateral.active_count(); ++r) {
                rec->source_rows[static_cast<size_t>(r)] = up.index().row_of(lateral.index().key(r));
            }
        }
    }
    return compress_levels(fused, store, cache);
}

std::vector<Map2D> forward_backbone(const SparseTensor3& t, const BackboneConfig& cfg, const ParamStore& store,
                                    BackboneCache* cache) {
    return cfg.variant == BackboneVariant::TopDown ? forward_3dbn2(t, cfg, store, cache)
                                                   : forward_3dbn1(t, cfg, store, cache);
}

void backward_backbone(const BackboneCache& cache, const BackboneConfig& cfg, const ParamStore& store,
                       std::span<const Map2D> grad_maps, ParamStore& grads) {
    const int n = cfg.levels();
    if (static_cast<int>(grad_maps.size()) != n || static_cast<int>(cache.compress.size()) != n) {
        throw Error("backward_backbone: level count mismatch");
    }
    // Gradients w.r.t. the (fused) level tensors entering compression.
    std::vector<FeatureMatrix> grad_fused(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& rec = cache.compress[static_cast<size_t>(i)];
        const Map2D& gm = grad_maps[static_cast<size_t>(i)];
        FeatureMatrix g(rec.out_index->size(), gm.channels);
        for (int32_t r = 0; r < rec.out_index->size(); ++r) {
            const Coord3& k = rec.out_index->key(r);
            for (int ch = 0; ch < gm.channels; ++ch) {
                g(r, ch) = gm.at(ch, k.w, k.l);
            }
        }
        grad_fused[static_cast<size_t>(i)] = back_sparse(rec.conv, g, store, grads);
    }

    std::vector<FeatureMatrix> grad_level(static_cast<size_t>(n));
    if (cfg.variant == BackboneVariant::TopDown) {
        // Level i's merge feeds on level i+1's fused tensor, so ascending
        // order sees each fused gradient complete before it is consumed.
        for (int i = 0; i + 1 < n; ++i) {
            const auto& td = cache.topdown[static_cast<size_t>(i)];
            FeatureMatrix g_merged = back_sparse(td.fuse, grad_fused[static_cast<size_t>(i)], store, grads);
            grad_level[static_cast<size_t>(i)] = g_merged.leftCols(td.lateral_channels);
            const int up_channels = static_cast<int>(g_merged.cols()) - td.lateral_channels;
            FeatureMatrix g_up = FeatureMatrix::Zero(td.deconv_rows, up_channels);
            for (size_t r = 0; r < td.source_rows.size(); ++r) {
                if (td.source_rows[r] >= 0) {
                    g_up.row(td.source_rows[r]) =
                        g_merged.row(static_cast<Eigen::Index>(r)).rightCols(up_channels);
                }
            }
            FeatureMatrix g_next = back_sparse(td.deconv, g_up, store, grads);
            grad_fused[static_cast<size_t>(i + 1)] += g_next;
        }
        grad_level[static_cast<size_t>(n - 1)] = grad_fused[static_cast<size_t>(n - 1)];
    } else {
        grad_level = grad_fused;
    }

    FeatureMatrix carry;
    for (int i = n - 1; i >= 0; --i) {
        const auto& lvl = cache.levels[static_cast<size_t>(i)];
        FeatureMatrix g = grad_level[static_cast<size_t>(i)];
        if (carry.size() > 0) {
            g += carry;
        }
        for (int b = cfg.blocks_per_level - 1; b >= 0; --b) {
            const auto& blk = lvl.blocks[static_cast<size_t>(b)];
            FeatureMatrix g_sum = relu_backward(blk.output, g);
            FeatureMatrix g_h = back_sparse(blk.conv1, g_sum, store, grads);
            g = g_sum + back_sparse(blk.conv0, g_h, store, grads);
        }
        if (i > 0) {
            carry = back_sparse(*lvl.down, g, store, grads);
        } else {
            back_sparse(cache.entry, g, store, grads);
        }
    }
}

HeadOutput fusion_forward(std::span<const Map2D> maps, const BackboneConfig& cfg, const ParamStore& store,
                          FusionCache* cache) {
    if (maps.size() != 4) {
        throw Error(fmt::format("fusion expects 4 level maps, got {}", maps.size()));
    }
    const Map2D& m2 = maps[1];
    Map2D m1 = run_dense(maps[0], store.get("fusion.down1"), 0, false, ActivationKind::ReLU,
                         cache ? &cache->down1 : nullptr);
    Map2D m3 = run_dense(maps[2], store.get("fusion.up3"), 0, true, ActivationKind::ReLU,
                         cache ? &cache->up3 : nullptr);
    Map2D m4 = run_dense(maps[3], store.get("fusion.up4"), 0, true, ActivationKind::ReLU,
                         cache ? &cache->up4 : nullptr);
    for (const Map2D* m : {&m1, &m3, &m4}) {
        if (m->w != m2.w || m->l != m2.l) {
            throw Error(fmt::format("fusion: resampled map {}x{} does not land on the level-2 grid {}x{}", m->w,
                                    m->l, m2.w, m2.l));
        }
    }
    std::vector<Map2D> parts{m1, m2, m3, m4};
    Map2D x = concat_maps(parts);
    if (cache != nullptr) {
        cache->parts = {m1.channels, m2.channels, m3.channels, m4.channels};
        cache->convs.assign(3, {});
    }
    for (int k = 0; k < 3; ++k) {
        x = run_dense(x, store.get(fmt::format("fusion.conv{}", k)), 1, false, ActivationKind::ReLU,
                      cache ? &cache->convs[static_cast<size_t>(k)] : nullptr);
    }
    HeadOutput head;
    head.per_cell = cfg.anchors_per_cell;
    head.cls = run_dense(x, store.get("head.cls"), 0, false, ActivationKind::Identity, cache ? &cache->cls : nullptr);
    head.reg = run_dense(x, store.get("head.reg"), 0, false, ActivationKind::Identity, cache ? &cache->reg : nullptr);
    head.dir = run_dense(x, store.get("head.dir"), 0, false, ActivationKind::Identity, cache ? &cache->dir : nullptr);
    return head;
}

std::vector<Map2D> fusion_backward(const FusionCache& cache, const ParamStore& store, const HeadOutput& grad,
                                   ParamStore& grads) {
    Map2D g = back_dense(cache.cls, grad.cls, store, grads);
    g = add_maps(std::move(g), back_dense(cache.reg, grad.reg, store, grads));
    g = add_maps(std::move(g), back_dense(cache.dir, grad.dir, store, grads));
    for (int k = 2; k >= 0; --k) {
        g = back_dense(cache.convs[static_cast<size_t>(k)], g, store, grads);
    }
    auto parts = split_channels(g, cache.parts);
    std::vector<Map2D> out(4);
    out[0] = back_dense(cache.down1, parts[0], store, grads);
    out[1] = std::move(parts[1]);
    out[2] = back_dense(cache.up3, parts[2], store, grads);
    out[3] = back_dense(cache.up4, parts[3], store, grads);
    return out;
}

HeadOutput model_forward(const SparseTensor3& t, const BackboneConfig& cfg, const ParamStore& store,
                         ModelCache* cache) {
    auto maps = forward_backbone(t, cfg, store, cache ? &cache->backbone : nullptr);
    return fusion_forward(maps, cfg, store, cache ? &cache->fusion : nullptr);
}

ParamStore model_backward(const ModelCache& cache, const BackboneConfig& cfg, const ParamStore& store,
                          const HeadOutput& grad) {
    ParamStore grads = store.zeros_like();
    auto grad_maps = fusion_backward(cache.fusion, store, grad, grads);
    backward_backbone(cache.backbone, cfg, store, grad_maps, grads);
    return grads;
}

std::string graph_summary(const ParamStore& store) {
    std::string out;
    for (const auto& l : store.layers()) {
        out += fmt::format("{:<16} {:<12} {:>4} -> {:<4} kernel {}x{}x{} stride {}x{}x{} params {}\n", l.name,
                           to_string(l.kind), l.w.c_in, l.w.c_out, l.kernel.h, l.kernel.w, l.kernel.l, l.stride.h,
                           l.stride.w, l.stride.l, l.w.parameter_count());
    }
    out += fmt::format("total params {}\n", store.parameter_count());
    return out;
}

} // namespace sp3d
