#include "drum/lidar.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "drum/errors.hpp"

namespace drum {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

void SensorIntrinsics::validate() const {
  if (height < 4 || width < 4) throw InvalidArgument("intrinsics: height and width must be at least 4");
  if (!(fov_up > fov_down)) throw InvalidArgument("intrinsics: fov_up must exceed fov_down");
  if (!(fov_up <= 90.0 && fov_down >= -90.0)) throw InvalidArgument("intrinsics: field of view out of range");
  if (!(max_range > 0.0)) throw InvalidArgument("intrinsics: max_range must be positive");
}

RangeImage::RangeImage(const SensorIntrinsics& intr)
    : intrinsics(intr),
      range(std::size_t{intr.height} * intr.width, kDropRange),
      reflectance(std::size_t{intr.height} * intr.width, 0.0) {}

void RangeImage::validate() const {
  intrinsics.validate();
  const std::size_t n = std::size_t{intrinsics.height} * intrinsics.width;
  if (range.size() != n || reflectance.size() != n) throw InvalidArgument("range image: size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const double r = range[i];
    if (!(r == kDropRange || (r > 0.0 && r <= intrinsics.max_range))) {
      throw InvalidArgument("range image: range out of bounds at pixel " + std::to_string(i));
    }
    if (!(reflectance[i] >= 0.0 && reflectance[i] <= 1.0)) {
      throw InvalidArgument("range image: reflectance out of bounds at pixel " + std::to_string(i));
    }
  }
}

double normalize_range(double r, double max_range) {
  if (r == kDropRange) return -1.0;
  return 2.0 * std::log1p(r) / std::log1p(max_range) - 1.0;
}

double denormalize_range(double x, double max_range) {
  return std::expm1(0.5 * (x + 1.0) * std::log1p(max_range));
}

Tensor normalize(const RangeImage& img) {
  const SensorIntrinsics& intr = img.intrinsics;
  Tensor out(Shape{2, intr.height, intr.width});
  auto range = out.channel(0);
  auto refl = out.channel(1);
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    range[i] = normalize_range(img.range[i], intr.max_range);
    refl[i] = 2.0 * img.reflectance[i] - 1.0;
  }
  return out;
}

RangeImage denormalize(const Tensor& x, const SensorIntrinsics& intr, double drop_threshold) {
  const Shape s = x.shape();
  if (s.channels != 2 || s.height != intr.height || s.width != intr.width) {
    throw InvalidArgument("denormalize: tensor shape does not match intrinsics");
  }
  RangeImage img(intr);
  const auto range = x.channel(0);
  const auto refl = x.channel(1);
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    if (!(range[i] > drop_threshold)) continue;
    const double r = denormalize_range(range[i], intr.max_range);
    if (!(r > 0.0)) continue;
    img.range[i] = std::min(r, intr.max_range);
    img.reflectance[i] = std::clamp(0.5 * (refl[i] + 1.0), 0.0, 1.0);
  }
  return img;
}

double column_azimuth(const SensorIntrinsics& intr, double col) {
  return 2.0 * std::numbers::pi * (1.0 - col / intr.width) - std::numbers::pi;
}

double row_elevation(const SensorIntrinsics& intr, double row) {
  return (intr.fov_up - row * (intr.fov_up - intr.fov_down) / intr.height) * kDeg;
}

RangeImage project(const PointCloud& pc, const SensorIntrinsics& intr) {
  intr.validate();
  RangeImage img(intr);
  const double fov = intr.fov_up - intr.fov_down;
  for (const auto& [x, y, z, refl] : pc.points) {
    const double r = std::sqrt(x * x + y * y + z * z);
    if (!(r > 0.0 && r <= intr.max_range)) continue;
    const double theta = std::atan2(y, x);
    const double phi_deg = std::asin(std::clamp(z / r, -1.0, 1.0)) / kDeg;
    double u = intr.width * (1.0 - (theta + std::numbers::pi) / (2.0 * std::numbers::pi));
    u = std::fmod(std::floor(u), static_cast<double>(intr.width));
    if (u < 0) u += intr.width;
    const double v = std::floor(intr.height * (intr.fov_up - phi_deg) / fov);
    const auto col = static_cast<std::size_t>(u);
    const auto row = static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(intr.height - 1)));
    const std::size_t i = img.index(row, col);
    if (img.range[i] == kDropRange || r < img.range[i]) {
      img.range[i] = r;
      img.reflectance[i] = std::clamp(refl, 0.0, 1.0);
    }
  }
  return img;
}

PointCloud unproject(const RangeImage& img) {
  const SensorIntrinsics& intr = img.intrinsics;
  PointCloud pc;
  for (std::size_t row = 0; row < intr.height; ++row) {
    const double phi = row_elevation(intr, row + 0.5);
    for (std::size_t col = 0; col < intr.width; ++col) {
      const std::size_t i = img.index(row, col);
      if (img.is_drop(i)) continue;
      const double theta = column_azimuth(intr, col + 0.5);
      const double r = img.range[i];
      pc.points.push_back({r * std::cos(phi) * std::cos(theta), r * std::cos(phi) * std::sin(theta),
                           r * std::sin(phi), img.reflectance[i]});
    }
  }
  return pc;
}

}  // namespace drum
