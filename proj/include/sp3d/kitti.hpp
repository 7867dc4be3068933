// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// KITTI-format ingestion: velodyne scans, object labels and calibration.
//
#pragma once

#include "sp3d/augmentation.hpp"
#include "sp3d/box.hpp"
#include "sp3d/voxelizer.hpp"

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace sp3d {

/// Little-endian float32 quadruples (x, y, z, reflectance).
PointCloud read_velodyne_bin(const std::string& path);
void write_velodyne_bin(const std::string& path, const PointCloud& pc);

struct KittiCalib {
    Eigen::Matrix3d r0_rect = Eigen::Matrix3d::Identity();
    /// LiDAR to reference camera, rows of the 3x4 Tr_velo_to_cam.
    Eigen::Matrix<double, 3, 4> velo_to_cam = Eigen::Matrix<double, 3, 4>::Identity();

    /// Rectified camera coordinates to LiDAR coordinates.
    Eigen::Vector3d rect_to_velo(const Eigen::Vector3d& p) const;
};

/// Reads R0_rect and Tr_velo_to_cam; other lines are ignored.
KittiCalib read_kitti_calib(const std::string& path);

/// Identity rectification and the usual LiDAR-to-camera axis swap
/// (x_cam = -y, y_cam = -z, z_cam = x).
KittiCalib default_kitti_calib();
void write_kitti_calib(const std::string& path, const KittiCalib& calib);

/// "Car" objects converted to LiDAR-frame boxes: the bottom-center location
/// is transformed and lifted by h/2, and theta = -ry - pi/2.
std::vector<Box3D> parse_kitti_labels(const std::string& text, const KittiCalib& calib);
std::vector<Box3D> read_kitti_labels(const std::string& label_path, const std::string& calib_path);

/// Inverse of parse_kitti_labels: one "Car" line per box (2D fields zero).
std::string format_kitti_labels(std::span<const Box3D> boxes, const KittiCalib& calib);

/// Dataset layout: <root>/velodyne/<id>.bin, <root>/label_2/<id>.txt and
/// <root>/calib/<id>.txt. Ids are the sorted velodyne file stems.
std::vector<std::string> list_scene_ids(const std::string& root);

/// Missing label or calib files give a scene without boxes.
Scene load_kitti_scene(const std::string& root, const std::string& id);

/// Writes all three files, with default_kitti_calib().
void save_kitti_scene(const std::string& root, const Scene& scene);

} // namespace sp3d
