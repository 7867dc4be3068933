// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/config.hpp"

#include "sp3d/error.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace sp3d {

namespace {

std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    size_t e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        out.push_back(trim(item));
    }
    return out;
}

template <typename T>
T parse_number(const std::string& v, const std::string& key) {
    T out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(fmt::format("{}: cannot parse '{}'", key, v));
    }
    return out;
}

double parse_double(const std::string& v, const std::string& key) {
    // from_chars for double is not available in libstdc++ 11.
    char* end = nullptr;
    double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out)) {
        throw ConfigError(fmt::format("{}: cannot parse '{}'", key, v));
    }
    return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") {
        return true;
    }
    if (v == "false" || v == "0") {
        return false;
    }
    throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, v));
}

template <typename T>
std::string join(const std::vector<T>& xs) {
    return fmt::format("{}", fmt::join(xs, ","));
}

struct Entry {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename F>
Entry num(std::string key, F field) {
    return {key, [field](const RunConfig& c) { return fmt::format("{}", field(const_cast<RunConfig&>(c))); },
            [field, key](RunConfig& c, const std::string& v) {
                auto& ref = field(c);
                using T = std::remove_reference_t<decltype(ref)>;
                if constexpr (std::is_same_v<T, double>) {
                    ref = parse_double(v, key);
                } else if constexpr (std::is_same_v<T, bool>) {
                    ref = parse_bool(v, key);
                } else {
                    ref = parse_number<T>(v, key);
                }
            }};
}

#define SP3D_FIELD(expr) [](RunConfig& c) -> auto& { return expr; }

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries = [] {
        std::vector<Entry> e;
        e.push_back(num("seed", SP3D_FIELD(c.seed)));
        e.push_back(num("deterministic", SP3D_FIELD(c.deterministic)));
        e.push_back(num("workers", SP3D_FIELD(c.workers)));

        e.push_back({"voxel.mode", [](const RunConfig& c) { return std::string(c.voxel.mode == VoxelMode::BV ? "bv" : "vfe"); },
                     [](RunConfig& c, const std::string& v) {
                         if (v == "bv") {
                             c.voxel.mode = VoxelMode::BV;
                         } else if (v == "vfe") {
                             c.voxel.mode = VoxelMode::VFE;
                         } else {
                             throw ConfigError(fmt::format("voxel.mode: expected bv or vfe, got '{}'", v));
                         }
                     }});
        e.push_back(num("voxel.x_min", SP3D_FIELD(c.voxel.x_min)));
        e.push_back(num("voxel.x_max", SP3D_FIELD(c.voxel.x_max)));
        e.push_back(num("voxel.y_min", SP3D_FIELD(c.voxel.y_min)));
        e.push_back(num("voxel.y_max", SP3D_FIELD(c.voxel.y_max)));
        e.push_back(num("voxel.z_min", SP3D_FIELD(c.voxel.z_min)));
        e.push_back(num("voxel.z_max", SP3D_FIELD(c.voxel.z_max)));
        e.push_back(num("voxel.vx", SP3D_FIELD(c.voxel.vx)));
        e.push_back(num("voxel.vy", SP3D_FIELD(c.voxel.vy)));
        e.push_back(num("voxel.vz", SP3D_FIELD(c.voxel.vz)));
        e.push_back(num("voxel.max_points", SP3D_FIELD(c.voxel.max_points)));
        e.push_back(num("voxel.vfe_mid", SP3D_FIELD(c.voxel.vfe_mid)));
        e.push_back(num("voxel.vfe_out", SP3D_FIELD(c.voxel.vfe_out)));
        e.push_back(num("voxel.pyramid_depth", SP3D_FIELD(c.voxel.pyramid_depth)));
        e.push_back(num("voxel.bv_encoder", SP3D_FIELD(c.bv_encoder)));

        e.push_back({"backbone.variant", [](const RunConfig& c) { return std::string(to_string(c.backbone.variant)); },
                     [](RunConfig& c, const std::string& v) { c.backbone.variant = backbone_variant_from_string(v); }});
        auto int_list = [](std::string key, auto field) {
            return Entry{key, [field](const RunConfig& c) { return join(field(const_cast<RunConfig&>(c))); },
                         [field, key](RunConfig& c, const std::string& v) {
                             std::vector<int> out;
                             for (const auto& item : split(v, ',')) {
                                 out.push_back(parse_number<int>(item, key));
                             }
                             field(c) = out;
                         }};
        };
        e.push_back(int_list("backbone.channels", SP3D_FIELD(c.backbone.channels)));
        e.push_back(int_list("backbone.out_channels", SP3D_FIELD(c.backbone.out_channels)));
        e.push_back(num("backbone.blocks_per_level", SP3D_FIELD(c.backbone.blocks_per_level)));
        e.push_back(num("backbone.fusion_channels", SP3D_FIELD(c.backbone.fusion_channels)));
        e.push_back(num("backbone.cls_prior", SP3D_FIELD(c.backbone.cls_prior)));

        e.push_back({"anchors.sizes",
                     [](const RunConfig& c) {
                         std::vector<std::string> parts;
                         for (const auto& s : c.anchors.sizes) {
                             parts.push_back(fmt::format("{}x{}x{}", s.l, s.w, s.h));
                         }
                         return join(parts);
                     },
                     [](RunConfig& c, const std::string& v) {
                         std::vector<AnchorSize> out;
                         for (const auto& item : split(v, ',')) {
                             auto dims = split(item, 'x');
                             if (dims.size() != 3) {
                                 throw ConfigError(fmt::format("anchors.sizes: expected LxWxH, got '{}'", item));
                             }
                             out.push_back({parse_double(dims[0], "anchors.sizes"),
                                            parse_double(dims[1], "anchors.sizes"),
                                            parse_double(dims[2], "anchors.sizes")});
                         }
                         c.anchors.sizes = out;
                     }});
        e.push_back({"anchors.orientations", [](const RunConfig& c) { return join(c.anchors.orientations); },
                     [](RunConfig& c, const std::string& v) {
                         std::vector<double> out;
                         for (const auto& item : split(v, ',')) {
                             out.push_back(parse_double(item, "anchors.orientations"));
                         }
                         c.anchors.orientations = out;
                     }});
        e.push_back(num("anchors.z_min", SP3D_FIELD(c.anchors.z_min)));

        e.push_back(num("match.pos_iou", SP3D_FIELD(c.match.pos_iou)));
        e.push_back(num("match.neg_iou", SP3D_FIELD(c.match.neg_iou)));
        e.push_back(num("match.force_best", SP3D_FIELD(c.match.force_best)));
        e.push_back(num("match.rotated", SP3D_FIELD(c.match.rotated)));

        e.push_back(num("loss.kappa", SP3D_FIELD(c.loss.kappa)));
        e.push_back(num("loss.lambda", SP3D_FIELD(c.loss.lambda)));
        e.push_back(num("loss.mu", SP3D_FIELD(c.loss.mu)));
        e.push_back(num("loss.alpha", SP3D_FIELD(c.loss.alpha)));
        e.push_back(num("loss.gamma", SP3D_FIELD(c.loss.gamma)));

        e.push_back(num("detect.score_threshold", SP3D_FIELD(c.detect.score_threshold)));
        e.push_back(num("detect.nms_threshold", SP3D_FIELD(c.detect.nms_threshold)));

        e.push_back(num("augment.enabled", SP3D_FIELD(c.augment_enabled)));
        e.push_back(num("augment.n_insert", SP3D_FIELD(c.augment.n_insert)));
        e.push_back(num("augment.max_global_rotation", SP3D_FIELD(c.augment.max_global_rotation)));
        e.push_back(num("augment.scale_min", SP3D_FIELD(c.augment.scale_min)));
        e.push_back(num("augment.scale_max", SP3D_FIELD(c.augment.scale_max)));
        e.push_back(num("augment.motion_max_rotation", SP3D_FIELD(c.augment.motion.max_rotation)));
        e.push_back(num("augment.motion_translation_std", SP3D_FIELD(c.augment.motion.translation_std)));
        e.push_back({"augment.order",
                     [](const RunConfig& c) {
                         std::vector<std::string_view> names;
                         for (auto s : c.augment.order) {
                             names.push_back(to_string(s));
                         }
                         return join(names);
                     },
                     [](RunConfig& c, const std::string& v) {
                         std::vector<AugmentStep> out;
                         for (const auto& item : split(v, ',')) {
                             if (!item.empty()) {
                                 out.push_back(augment_step_from_string(item));
                             }
                         }
                         c.augment.order = out;
                     }});

        e.push_back(num("synthetic.min_boxes", SP3D_FIELD(c.synthetic.min_boxes)));
        e.push_back(num("synthetic.max_boxes", SP3D_FIELD(c.synthetic.max_boxes)));
        e.push_back(num("synthetic.l_min", SP3D_FIELD(c.synthetic.l_min)));
        e.push_back(num("synthetic.l_max", SP3D_FIELD(c.synthetic.l_max)));
        e.push_back(num("synthetic.w_min", SP3D_FIELD(c.synthetic.w_min)));
        e.push_back(num("synthetic.w_max", SP3D_FIELD(c.synthetic.w_max)));
        e.push_back(num("synthetic.h_min", SP3D_FIELD(c.synthetic.h_min)));
        e.push_back(num("synthetic.h_max", SP3D_FIELD(c.synthetic.h_max)));
        e.push_back(num("synthetic.ground_z", SP3D_FIELD(c.synthetic.ground_z)));
        e.push_back(num("synthetic.points_per_box", SP3D_FIELD(c.synthetic.points_per_box)));
        e.push_back(num("synthetic.clutter_points", SP3D_FIELD(c.synthetic.clutter_points)));
        e.push_back(num("synthetic.margin", SP3D_FIELD(c.synthetic.margin)));

        e.push_back(num("optim.lr", SP3D_FIELD(c.optim.lr)));
        e.push_back(num("optim.decay", SP3D_FIELD(c.optim.decay)));
        e.push_back(num("optim.decay_steps", SP3D_FIELD(c.optim.decay_steps)));
        e.push_back(num("optim.beta1", SP3D_FIELD(c.optim.beta1)));
        e.push_back(num("optim.beta2", SP3D_FIELD(c.optim.beta2)));
        e.push_back(num("optim.epsilon", SP3D_FIELD(c.optim.epsilon)));
        e.push_back(num("optim.steps", SP3D_FIELD(c.optim.steps)));
        return e;
    }();
    return entries;
}

#undef SP3D_FIELD

// Index-to-world mapping of one k3 s2 stage: level index i covers the
// previous level's indices 2i..2i+2, centered at 2i+1.
struct Affine {
    double a = 1.0;
    double b = 0.5;
    void stride2() { b += a, a *= 2.0; }
};

Affine head_mapping(const RunConfig& cfg) {
    Affine m;
    if (cfg.voxel.mode == VoxelMode::BV && cfg.bv_encoder) {
        for (int i = 0; i < 3; ++i) {
            m.stride2();
        }
    }
    m.stride2(); // level 1 -> level 2
    return m;
}

} // namespace

RunConfig RunConfig::desk() {
    RunConfig c;
    c.voxel.mode = VoxelMode::BV;
    c.voxel.x_min = 0.0;
    c.voxel.x_max = 25.2;
    c.voxel.y_min = -12.6;
    c.voxel.y_max = 12.6;
    c.voxel.z_min = -3.25;
    c.voxel.z_max = 1.25;
    c.voxel.vx = 0.4;
    c.voxel.vy = 0.4;
    c.voxel.vz = 0.3;
    c.bv_encoder = false;
    c.backbone.channels = {16, 16, 16, 16};
    c.backbone.out_channels = {16, 16, 16, 16};
    c.backbone.fusion_channels = 16;
    c.anchors.z_min = -1.7;
    return c;
}

void RunConfig::validate() const {
    model_config(*this).validate();
    if (backbone.levels() != 4) {
        throw ConfigError("backbone: the fusion network needs exactly four levels");
    }
    if (workers < 1) {
        throw ConfigError("workers must be at least 1");
    }
    if (anchors.sizes.empty() || anchors.orientations.empty()) {
        throw ConfigError("anchors: sizes and orientations must be non-empty");
    }
    for (const auto& s : anchors.sizes) {
        if (!(s.l > 0.0 && s.w > 0.0 && s.h > 0.0)) {
            throw ConfigError("anchors: sizes must be positive");
        }
    }
    if (!(match.neg_iou <= match.pos_iou)) {
        throw ConfigError("match: neg_iou must not exceed pos_iou");
    }
    if (!(optim.lr >= 0.0) || optim.decay_steps <= 0 || optim.steps < 0) {
        throw ConfigError("optim: lr >= 0, decay_steps > 0 and steps >= 0 required");
    }
    if (!(augment.scale_min > 0.0 && augment.scale_min <= augment.scale_max)) {
        throw ConfigError("augment: need 0 < scale_min <= scale_max");
    }
    if (voxel.max_points <= 0 || voxel.vfe_mid <= 0 || voxel.vfe_mid % 2 != 0 || voxel.vfe_out <= 0) {
        throw ConfigError("voxel: max_points, vfe_out positive and vfe_mid positive and even required");
    }
    try {
        level_shapes(backbone_input_shape(*this), backbone.levels());
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(fmt::format("voxel grid does not fit the backbone: {}", e.what()));
    }
}

RunConfig parse_config(const std::string& text) {
    std::map<std::string, const Entry*> index;
    for (const auto& e : registry()) {
        index[e.key] = &e;
    }
    RunConfig cfg;
    std::set<std::string> seen;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.resize(hash);
        }
        std::string t = trim(line);
        if (t.empty()) {
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(fmt::format("config line {}: expected 'key = value'", line_no));
        }
        std::string key = trim(std::string_view(t).substr(0, eq));
        std::string value = trim(std::string_view(t).substr(eq + 1));
        auto it = index.find(key);
        if (it == index.end()) {
            throw ConfigError(fmt::format("config line {}: unknown key '{}'", line_no, key));
        }
        if (!seen.insert(key).second) {
            throw ConfigError(fmt::format("config line {}: duplicate key '{}'", line_no, key));
        }
        try {
            it->second->set(cfg, value);
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("config line {}: {}", line_no, e.what()));
        }
    }
    cfg.validate();
    return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& e : registry()) {
        out += fmt::format("{} = {}\n", e.key, e.get(cfg));
    }
    return out;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot open config '{}'", path));
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void apply_env_overrides(RunConfig& cfg) {
    if (const char* s = std::getenv("SP3D_SEED"); s != nullptr) {
        cfg.seed = parse_number<uint64_t>(trim(s), "SP3D_SEED");
    }
}

double learning_rate(const OptimizerConfig& o, long step) {
    return o.lr * std::pow(o.decay, static_cast<double>(step / o.decay_steps));
}

Shape3 backbone_input_shape(const RunConfig& cfg) {
    Shape3 grid = grid_shape(cfg.voxel, cfg.voxel.pyramid_depth);
    if (cfg.voxel.mode == VoxelMode::BV && cfg.bv_encoder) {
        return bv_stack_shapes(grid).back().shape;
    }
    return grid;
}

int backbone_input_channels(const RunConfig& cfg) {
    if (cfg.voxel.mode == VoxelMode::VFE) {
        return cfg.voxel.vfe_out;
    }
    return cfg.bv_encoder ? bv_stack_shapes(grid_shape(cfg.voxel, cfg.voxel.pyramid_depth)).back().channels : 1;
}

BackboneConfig model_config(const RunConfig& cfg) {
    BackboneConfig b = cfg.backbone;
    b.in_channels = backbone_input_channels(cfg);
    b.anchors_per_cell = cfg.anchors.per_cell();
    return b;
}

AnchorConfig anchor_config(const RunConfig& cfg) {
    auto shapes = level_shapes(backbone_input_shape(cfg), 2);
    const Affine m = head_mapping(cfg);
    AnchorConfig a = cfg.anchors;
    a.grid_w = shapes[1].w;
    a.grid_l = shapes[1].l;
    // Cell j is centered at min + (a*j + b) * v, i.e. at anchor_min + (j + 0.5) * a * v.
    a.x_min = cfg.voxel.x_min + (m.b - 0.5 * m.a) * cfg.voxel.vx;
    a.x_max = a.x_min + a.grid_l * m.a * cfg.voxel.vx;
    a.y_min = cfg.voxel.y_min + (m.b - 0.5 * m.a) * cfg.voxel.vy;
    a.y_max = a.y_min + a.grid_w * m.a * cfg.voxel.vy;
    return a;
}

} // namespace sp3d
