// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// sp3d command line: voxelize, infer, train-toy, eval, bench, selfcheck,
// plot-export and synth.
//
// Exit codes: 0 success, 1 failure, 2 bad configuration or arguments.
//
#include "sp3d/bench.hpp"
#include "sp3d/checks.hpp"
#include "sp3d/config.hpp"
#include "sp3d/error.hpp"
#include "sp3d/eval.hpp"
#include "sp3d/kitti.hpp"
#include "sp3d/pipeline.hpp"
#include "sp3d/synthetic.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/os.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace sp3d;

namespace {

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg = path.empty() ? RunConfig::desk() : load_config(path);
    apply_env_overrides(cfg);
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) {
        throw Error(fmt::format("cannot write '{}'", path));
    }
}

ParamStore model_weights(const RunConfig& cfg, const std::string& path) {
    ParamStore store = build_model(cfg);
    if (!path.empty()) {
        load_weights(path, store);
    }
    return store;
}

/// Scene ids and .bin paths of a KITTI root (velodyne/*.bin) or a flat
/// directory of .bin files.
std::vector<std::pair<std::string, fs::path>> list_clouds(const std::string& dir) {
    fs::path base(dir);
    if (fs::is_directory(base / "velodyne")) {
        base /= "velodyne";
    }
    if (!fs::is_directory(base)) {
        throw Error(fmt::format("'{}' is not a directory", dir));
    }
    std::vector<std::pair<std::string, fs::path>> out;
    for (const auto& e : fs::directory_iterator(base)) {
        if (e.is_regular_file() && e.path().extension() == ".bin") {
            out.emplace_back(e.path().stem().string(), e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

int cmd_voxelize(const std::string& config, const std::string& input, const std::string& out,
                 const std::string& weights) {
    const RunConfig cfg = load_run_config(config);
    const PointCloud pc = read_velodyne_bin(input);
    SparseTensor3 t = [&] {
        if (cfg.voxel.mode == VoxelMode::BV) {
            return voxelize_bv(pc, cfg.voxel);
        }
        VoxelConfig vc = cfg.voxel;
        vc.seed = cfg.seed;
        return voxelize_vfe(pc, vc, model_weights(cfg, weights));
    }();
    std::ostringstream os;
    const Shape3 s = t.shape();
    os << fmt::format("# shape {} {} {} channels {} active {}\n", s.h, s.w, s.l, t.channels(), t.active_count());
    write_sites(os, t);
    write_text(out, os.str());
    return 0;
}

int cmd_infer(const std::string& config, const std::string& weights, const std::string& input,
              const std::string& out, int workers) {
    RunConfig cfg = load_run_config(config);
    if (workers > 0) {
        cfg.workers = workers;
    }
    const ParamStore store = model_weights(cfg, weights);
    const AnchorSet anchors = generate_anchors(anchor_config(cfg));
    const auto clouds = list_clouds(input);
    fs::create_directories(out);
    std::vector<std::string> results(clouds.size());
    std::vector<std::string> errors(clouds.size());
    std::atomic<size_t> next{0};
    auto run = [&] {
        for (size_t i = next++; i < clouds.size(); i = next++) {
            try {
                std::ostringstream os;
                write_detections(os, infer(read_velodyne_bin(clouds[i].second.string()), cfg, store, anchors));
                results[i] = os.str();
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const int n_threads = cfg.deterministic ? 1 : std::max(1, cfg.workers);
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) {
        pool.emplace_back(run);
    }
    run();
    for (auto& th : pool) {
        th.join();
    }
    for (size_t i = 0; i < clouds.size(); ++i) {
        if (!errors[i].empty()) {
            throw Error(fmt::format("scene {}: {}", clouds[i].first, errors[i]));
        }
        write_text((fs::path(out) / (clouds[i].first + ".txt")).string(), results[i]);
        std::cout << fmt::format("{} {}\n", clouds[i].first, std::count(results[i].begin(), results[i].end(), '\n'));
    }
    return 0;
}

int cmd_train_toy(const std::string& config, const std::string& scenes_dir, const std::string& out,
                  const std::string& curve_path, int steps) {
    RunConfig cfg = load_run_config(config);
    if (steps >= 0) {
        cfg.optim.steps = steps;
    }
    std::vector<Scene> scenes;
    for (const auto& id : list_scene_ids(scenes_dir)) {
        scenes.push_back(load_kitti_scene(scenes_dir, id));
    }
    if (scenes.empty()) {
        throw Error(fmt::format("no scenes under '{}'", scenes_dir));
    }
    std::string curve = "step,lr,cls,reg,dir,total\n";
    TrainResult res = train_toy(cfg, scenes, [&](const TrainStep& s) {
        curve += fmt::format("{},{:.9g},{:.17g},{:.17g},{:.17g},{:.17g}\n", s.step, s.lr, s.parts.cls, s.parts.reg,
                             s.parts.dir, s.total);
    });
    save_weights(out, res.weights);
    write_text(curve_path, curve);
    if (!curve_path.empty() && curve_path != "-" && !res.curve.empty()) {
        std::cout << fmt::format("steps {} loss {:.6g} -> {:.6g}\n", res.curve.size(), res.curve.front().total,
                                 res.curve.back().total);
    }
    return 0;
}

int cmd_eval(const std::string& dets_dir, const std::string& gts_dir, const std::vector<double>& thresholds,
             const std::string& out) {
    std::vector<std::vector<Detection>> dets;
    std::vector<std::vector<Box3D>> gts;
    for (const auto& id : list_scene_ids(gts_dir)) {
        const Scene s = load_kitti_scene(gts_dir, id);
        gts.push_back(s.gt_boxes);
        const fs::path dp = fs::path(dets_dir) / (id + ".txt");
        if (fs::exists(dp)) {
            std::ifstream is(dp);
            dets.push_back(read_detections(is));
        } else {
            dets.emplace_back();
        }
    }
    EvalReport r = evaluate(dets, gts, thresholds);
    write_text(out, format_report(r));
    return 0;
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (item.empty() || *end != '\0') {
            throw ConfigError(fmt::format("bad number '{}' in list '{}'", item, text));
        }
        out.push_back(v);
    }
    return out;
}

int cmd_bench(const std::string& config, const std::string& densities, const std::string& out) {
    const RunConfig cfg = load_run_config(config);
    const auto d = parse_list(densities);
    write_text(out, bench_csv(bench(cfg, d)));
    return 0;
}

int cmd_selfcheck(bool quick) {
    bool ok = true;
    for (const auto& r : run_selfcheck(quick)) {
        std::cout << format_check(r) << '\n';
        ok = ok && r.passed();
    }
    return ok ? 0 : 1;
}

int cmd_plot_export(const std::string& config, const std::string& scene, const std::string& labels,
                    const std::string& calib, const std::string& dets_path, const std::string& out, double mpp) {
    const RunConfig cfg = load_run_config(config);
    const PointCloud pc = read_velodyne_bin(scene);
    std::vector<Box3D> gts;
    if (!labels.empty()) {
        std::ifstream is(labels);
        if (!is) {
            throw Error(fmt::format("cannot read '{}'", labels));
        }
        std::stringstream ss;
        ss << is.rdbuf();
        gts = parse_kitti_labels(ss.str(), calib.empty() ? default_kitti_calib() : read_kitti_calib(calib));
    }
    std::vector<Detection> dets;
    if (!dets_path.empty()) {
        std::ifstream is(dets_path);
        if (!is) {
            throw Error(fmt::format("cannot read '{}'", dets_path));
        }
        dets = read_detections(is);
    }
    write_text(out, render_bev_ppm(pc, gts, dets, cfg.voxel, mpp));
    return 0;
}

int cmd_synth(const std::string& config, const std::string& out, int count) {
    const RunConfig cfg = load_run_config(config);
    for (int i = 0; i < count; ++i) {
        const std::string id = fmt::format("{:06d}", i);
        save_kitti_scene(out, make_synthetic_scene(cfg.synthetic, cfg.voxel, cfg.seed + static_cast<uint64_t>(i), id));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sp3d: sparse 3D convolution detector toolkit"};
    app.require_subcommand(1);
    std::string config;
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config, "config file (default: built-in desk preset)")->check(CLI::ExistingFile);
    };

    std::string input, out, weights;
    auto* vox = app.add_subcommand("voxelize", "voxelize a velodyne .bin and dump the active sites");
    add_config(vox);
    vox->add_option("--input", input, "velodyne .bin file")->required();
    vox->add_option("--out", out, "output file (default stdout)");
    vox->add_option("--weights", weights, "weights for the VFE layers");

    int workers = 0;
    auto* inf = app.add_subcommand("infer", "detect cars in every scene of a directory");
    add_config(inf);
    inf->add_option("--weights", weights, "weight file (default: seeded initialization)");
    inf->add_option("--input", input, "KITTI root or directory of .bin files")->required();
    inf->add_option("--out", out, "output directory for <id>.txt detections")->required();
    inf->add_option("--workers", workers, "scene-level worker threads (ignored in deterministic mode)");

    std::string curve;
    int steps = -1;
    auto* train = app.add_subcommand("train-toy", "train on a small KITTI-layout scene set");
    add_config(train);
    train->add_option("--scenes", input, "KITTI-layout root")->required();
    train->add_option("--out", out, "weight file")->required();
    train->add_option("--curve", curve, "loss curve CSV (default stdout)");
    train->add_option("--steps", steps, "override optim.steps");

    std::string dets, gts;
    std::vector<double> ious;
    auto* ev = app.add_subcommand("eval", "11-point AP of detections against KITTI labels");
    ev->add_option("--dets", dets, "directory of <id>.txt detections")->required();
    ev->add_option("--gts", gts, "KITTI-layout root with labels")->required();
    ev->add_option("--iou", ious, "IoU threshold(s)")->default_val(std::vector<double>{0.7});
    ev->add_option("--out", out, "report file (default stdout)");

    std::string densities = "0.01,0.05,0.1";
    auto* be = app.add_subcommand("bench", "time the sparse engine at several input densities");
    add_config(be);
    be->add_option("--densities", densities, "comma-separated densities");
    be->add_option("--out", out, "CSV file (default stdout)");

    bool quick = false;
    auto* sc = app.add_subcommand("selfcheck", "oracle, adjointness and gradient suites");
    sc->add_flag("--quick", quick, "fewer cases per suite");

    std::string labels, calib;
    double mpp = 0.1;
    auto* plot = app.add_subcommand("plot-export", "render a BEV image (binary PPM)");
    add_config(plot);
    plot->add_option("--scene", input, "velodyne .bin file")->required();
    plot->add_option("--labels", labels, "KITTI label file for gt boxes");
    plot->add_option("--calib", calib, "KITTI calib file (default: built-in)");
    plot->add_option("--dets", dets, "detection file");
    plot->add_option("--out", out, "output .ppm")->required();
    plot->add_option("--resolution", mpp, "meters per pixel");

    int count = 1;
    auto* syn = app.add_subcommand("synth", "write seeded synthetic scenes in KITTI layout");
    add_config(syn);
    syn->add_option("--out", out, "output root")->required();
    syn->add_option("--count", count, "number of scenes")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*vox) return cmd_voxelize(config, input, out, weights);
        if (*inf) return cmd_infer(config, weights, input, out, workers);
        if (*train) return cmd_train_toy(config, input, out, curve, steps);
        if (*ev) return cmd_eval(dets, gts, ious, out);
        if (*be) return cmd_bench(config, densities, out);
        if (*sc) return cmd_selfcheck(quick);
        if (*plot) return cmd_plot_export(config, input, labels, calib, dets, out, mpp);
        if (*syn) return cmd_synth(config, out, count);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
