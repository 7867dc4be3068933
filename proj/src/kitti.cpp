// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/kitti.hpp"

#include "sp3d/error.hpp"

#include <fmt/format.h>

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace sp3d {

namespace {

static_assert(std::endian::native == std::endian::little, "velodyne I/O assumes a little-endian host");

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(fmt::format("cannot open '{}'", path));
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

PointCloud read_velodyne_bin(const std::string& path) {
    const std::string bytes = read_all(path);
    if (bytes.size() % 16 != 0) {
        throw Error(fmt::format("'{}': truncated point record at byte offset {} (file size {})", path,
                                bytes.size() - bytes.size() % 16, bytes.size()));
    }
    PointCloud pc(bytes.size() / 16);
    for (size_t i = 0; i < pc.size(); ++i) {
        std::array<float, 4> v;
        std::memcpy(v.data(), bytes.data() + 16 * i, 16);
        pc[i] = {v[0], v[1], v[2], v[3]};
    }
    return pc;
}

void write_velodyne_bin(const std::string& path, const PointCloud& pc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(fmt::format("cannot write '{}'", path));
    }
    for (const auto& p : pc) {
        std::array<float, 4> v{static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z),
                               static_cast<float>(p.intensity)};
        out.write(reinterpret_cast<const char*>(v.data()), 16);
    }
}

Eigen::Vector3d KittiCalib::rect_to_velo(const Eigen::Vector3d& p) const {
    Eigen::Vector3d ref = r0_rect.inverse() * p;
    const Eigen::Matrix3d rot = velo_to_cam.leftCols<3>();
    const Eigen::Vector3d t = velo_to_cam.col(3);
    return rot.inverse() * (ref - t);
}

KittiCalib read_kitti_calib(const std::string& path) {
    std::istringstream is(read_all(path));
    KittiCalib c;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        auto colon = line.find(':');
        if (colon == std::string::npos) {
            continue;
        }
        std::string key = line.substr(0, colon);
        std::istringstream vals(line.substr(colon + 1));
        std::vector<double> v;
        double x = 0.0;
        while (vals >> x) {
            v.push_back(x);
        }
        if (key == "R0_rect") {
            if (v.size() != 9) {
                throw Error(fmt::format("'{}' line {}: R0_rect needs 9 values", path, line_no));
            }
            for (int r = 0; r < 3; ++r) {
                for (int k = 0; k < 3; ++k) {
                    c.r0_rect(r, k) = v[static_cast<size_t>(3 * r + k)];
                }
            }
        } else if (key == "Tr_velo_to_cam") {
            if (v.size() != 12) {
                throw Error(fmt::format("'{}' line {}: Tr_velo_to_cam needs 12 values", path, line_no));
            }
            for (int r = 0; r < 3; ++r) {
                for (int k = 0; k < 4; ++k) {
                    c.velo_to_cam(r, k) = v[static_cast<size_t>(4 * r + k)];
                }
            }
        }
    }
    return c;
}

std::vector<Box3D> parse_kitti_labels(const std::string& text, const KittiCalib& calib) {
    std::vector<Box3D> out;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream ss(line);
        std::string type;
        std::array<double, 14> f{};
        ss >> type;
        for (double& v : f) {
            ss >> v;
        }
        if (!ss) {
            throw Error(fmt::format("label line {}: expected a type and 14 numbers", line_no));
        }
        if (type != "Car") {
            continue;
        }
        // truncated occluded alpha bbox(4) h w l x y z ry
        const double h = f[7];
        const double w = f[8];
        const double l = f[9];
        Eigen::Vector3d bottom = calib.rect_to_velo({f[10], f[11], f[12]});
        Box3D b;
        b.x = bottom.x();
        b.y = bottom.y();
        b.z = bottom.z() + h / 2.0;
        b.l = l;
        b.w = w;
        b.h = h;
        b.theta = wrap_angle(-f[13] - std::numbers::pi / 2.0);
        out.push_back(b);
    }
    return out;
}

std::vector<Box3D> read_kitti_labels(const std::string& label_path, const std::string& calib_path) {
    return parse_kitti_labels(read_all(label_path), read_kitti_calib(calib_path));
}

KittiCalib default_kitti_calib() {
    KittiCalib c;
    c.velo_to_cam << 0, -1, 0, 0, 0, 0, -1, 0, 1, 0, 0, 0;
    return c;
}

void write_kitti_calib(const std::string& path, const KittiCalib& calib) {
    std::ofstream out(path);
    if (!out) {
        throw Error(fmt::format("cannot write '{}'", path));
    }
    Eigen::Matrix3d r0_rows = calib.r0_rect.transpose();
    Eigen::Matrix<double, 4, 3> tr_rows = calib.velo_to_cam.transpose();
    out << fmt::format("R0_rect: {}\n", fmt::join(r0_rows.data(), r0_rows.data() + 9, " "));
    out << fmt::format("Tr_velo_to_cam: {}\n", fmt::join(tr_rows.data(), tr_rows.data() + 12, " "));
}

std::string format_kitti_labels(std::span<const Box3D> boxes, const KittiCalib& calib) {
    const Eigen::Matrix3d rot = calib.velo_to_cam.leftCols<3>();
    const Eigen::Vector3d t = calib.velo_to_cam.col(3);
    std::string out;
    for (const auto& b : boxes) {
        Eigen::Vector3d bottom(b.x, b.y, b.z - b.h / 2.0);
        Eigen::Vector3d cam = calib.r0_rect * (rot * bottom + t);
        double ry = wrap_angle(-b.theta - std::numbers::pi / 2.0);
        out += fmt::format("Car 0 0 0 0 0 0 0 {} {} {} {} {} {} {}\n", b.h, b.w, b.l, cam.x(), cam.y(), cam.z(), ry);
    }
    return out;
}

std::vector<std::string> list_scene_ids(const std::string& root) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(root) / "velodyne";
    if (!fs::is_directory(dir)) {
        throw Error(fmt::format("'{}' has no velodyne directory", root));
    }
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".bin") {
            ids.push_back(e.path().stem().string());
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

Scene load_kitti_scene(const std::string& root, const std::string& id) {
    namespace fs = std::filesystem;
    const fs::path r(root);
    Scene s;
    s.id = id;
    s.cloud = read_velodyne_bin((r / "velodyne" / (id + ".bin")).string());
    const fs::path label = r / "label_2" / (id + ".txt");
    const fs::path calib = r / "calib" / (id + ".txt");
    if (fs::exists(label) && fs::exists(calib)) {
        s.gt_boxes = read_kitti_labels(label.string(), calib.string());
    }
    return s;
}

void save_kitti_scene(const std::string& root, const Scene& scene) {
    namespace fs = std::filesystem;
    const fs::path r(root);
    for (const char* sub : {"velodyne", "label_2", "calib"}) {
        fs::create_directories(r / sub);
    }
    const KittiCalib calib = default_kitti_calib();
    write_velodyne_bin((r / "velodyne" / (scene.id + ".bin")).string(), scene.cloud);
    write_kitti_calib((r / "calib" / (scene.id + ".txt")).string(), calib);
    std::ofstream labels(r / "label_2" / (scene.id + ".txt"));
    labels << format_kitti_labels(scene.gt_boxes, calib);
    if (!labels) {
        throw Error(fmt::format("cannot write labels for scene '{}'", scene.id));
    }
}

} // namespace sp3d
