#pragma once

#include <filesystem>
#include <vector>

#include "drum/lidar.hpp"

namespace drum {

// DRUMIMG1: magic, u32 H, u32 W, u32 C = 2, f32 max_range, f32 fov_up, f32 fov_down,
// then C*H*W f32 row-major (range plane in meters with -1 at drops, then reflectance).
void save_range_image(const std::filesystem::path& path, const RangeImage& img);
RangeImage load_range_image(const std::filesystem::path& path);

// KITTI velodyne .bin: headerless little-endian f32 quadruples (x, y, z, reflectance).
void save_kitti_bin(const std::filesystem::path& path, const PointCloud& pc);
PointCloud load_kitti_bin(const std::filesystem::path& path);

// DRUMFEAT: magic, u32 N, u32 D, then N*D f32 row-major.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major
};
void save_features(const std::filesystem::path& path, const FeatureMatrix& fm);
FeatureMatrix load_features(const std::filesystem::path& path);

// 8-bit grayscale PNG of one channel through the normalize map; drops are black.
enum class PngChannel { range, reflectance };
void write_png(const std::filesystem::path& path, const RangeImage& img, PngChannel channel);

// Regular files with the given extension, sorted by filename.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir, const std::string& extension);

}  // namespace drum
