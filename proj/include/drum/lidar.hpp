#pragma once

// Range-image data model of a spinning multi-beam LiDAR: an H x W
// equirectangular grid (rows = elevation, columns = azimuth) with range and
// reflectance channels, plus conversion to and from point clouds.

#include <array>
#include <cstdint>
#include <vector>

#include "drum/tensor.hpp"

namespace drum {

struct SensorIntrinsics {
  std::uint32_t height = 32;  // beams (elevation bins)
  std::uint32_t width = 128;  // azimuth bins
  double fov_up = 3.0;        // degrees
  double fov_down = -15.0;    // degrees
  double max_range = 80.0;    // meters

  void validate() const;
  bool operator==(const SensorIntrinsics&) const = default;
};

// Raydrop sentinel in metric range; reflectance is 0 at drops.
inline constexpr double kDropRange = -1.0;

// Values at or below this normalized range denormalize to a drop.
inline constexpr double kDefaultDropThreshold = -0.999;

struct RangeImage {
  SensorIntrinsics intrinsics;
  std::vector<double> range;        // meters, kDropRange at drops
  std::vector<double> reflectance;  // [0, 1], 0 at drops

  RangeImage() = default;
  // All pixels dropped.
  explicit RangeImage(const SensorIntrinsics& intr);

  std::size_t pixels() const { return range.size(); }
  bool is_drop(std::size_t i) const { return range[i] == kDropRange; }
  std::size_t index(std::size_t row, std::size_t col) const { return row * intrinsics.width + col; }

  // Checks the range/reflectance invariants; throws InvalidArgument.
  void validate() const;
  bool operator==(const RangeImage&) const = default;
};

struct PointCloud {
  std::vector<std::array<double, 4>> points;  // x, y, z (m), reflectance
};

// Range: 2 log(r + 1) / log(max_range + 1) - 1, drops -> -1. Reflectance: 2 v - 1.
double normalize_range(double r, double max_range);
double denormalize_range(double x, double max_range);

Tensor normalize(const RangeImage& img);

// Inverse of normalize on non-drop pixels. Range values <= drop_threshold become
// drops; ranges are clamped to (0, max_range] and reflectance to [0, 1].
RangeImage denormalize(const Tensor& x, const SensorIntrinsics& intr, double drop_threshold = kDefaultDropThreshold);

// Pixel-center angles (radians) of a row / column.
double column_azimuth(const SensorIntrinsics& intr, double col);
double row_elevation(const SensorIntrinsics& intr, double row);

// Spherical projection, nearest point wins per pixel; points beyond max_range
// or at the origin are discarded and unhit pixels are drops.
RangeImage project(const PointCloud& pc, const SensorIntrinsics& intr);

// One point per non-drop pixel at the pixel-center angles.
PointCloud unproject(const RangeImage& img);

}  // namespace drum
