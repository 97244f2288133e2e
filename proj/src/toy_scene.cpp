#include "drum/toy_scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "drum/errors.hpp"

namespace drum {

void ToySceneConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(drop_base) || !prob(drop_glass) || !prob(glass_fraction)) {
    throw InvalidArgument("toy scene: probabilities must lie in [0, 1]");
  }
  if (!(sensor_height > 0.0)) throw InvalidArgument("toy scene: sensor_height must be positive");
  if (enclosure && !(enclosure_radius > 0.0)) throw InvalidArgument("toy scene: enclosure_radius must be positive");
}

namespace {

using Vec3 = std::array<double, 3>;

struct Box {
  Vec3 lo;
  Vec3 hi;
  double albedo;
  bool glass;
};

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal{};
  double albedo = 0.0;
  bool glass = false;
};

std::vector<Box> layout(const ToySceneConfig& cfg) {
  Rng rng = make_rng(cfg.seed, 0);
  std::uniform_real_distribution<double> radius(8.0, 30.0), angle(-std::numbers::pi, std::numbers::pi),
      half(0.5, 2.0), height(1.0, 3.0), albedo(0.2, 0.9), unit(0.0, 1.0);
  std::vector<Box> boxes;
  for (std::uint32_t i = 0; i < cfg.n_boxes; ++i) {
    const double r = radius(rng), a = angle(rng);
    const double hx = half(rng), hy = half(rng), hz = height(rng);
    const double cx = r * std::cos(a), cy = r * std::sin(a);
    Box b{{cx - hx, cy - hy, -cfg.sensor_height}, {cx + hx, cy + hy, -cfg.sensor_height + hz}, albedo(rng), false};
    b.glass = unit(rng) < cfg.glass_fraction;
    if (b.glass) b.albedo = 0.1;
    boxes.push_back(b);
  }
  return boxes;
}

// Slab test for a ray from the origin.
void intersect_box(const Box& b, const Vec3& d, Hit& hit) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  int axis = -1;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-12) {
      if (0.0 < b.lo[k] || 0.0 > b.hi[k]) return;
      continue;
    }
    double a = b.lo[k] / d[k], c = b.hi[k] / d[k];
    if (a > c) std::swap(a, c);
    if (a > t0) {
      t0 = a;
      axis = k;
    }
    t1 = std::min(t1, c);
    if (t0 > t1) return;
  }
  if (axis < 0 || !(t0 < hit.t)) return;
  hit.t = t0;
  hit.normal = {0.0, 0.0, 0.0};
  hit.normal[axis] = d[axis] > 0 ? -1.0 : 1.0;
  hit.albedo = b.albedo;
  hit.glass = b.glass;
}

}  // namespace

RangeImage gen_toy_scene(const ToySceneConfig& cfg, const SensorIntrinsics& intr) {
  cfg.validate();
  intr.validate();
  const std::vector<Box> boxes = layout(cfg);
  Rng noise = make_rng(cfg.seed, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.02);

  RangeImage img(intr);
  for (std::size_t row = 0; row < intr.height; ++row) {
    const double phi = row_elevation(intr, row + 0.5);
    for (std::size_t col = 0; col < intr.width; ++col) {
      const double theta = column_azimuth(intr, col + 0.5);
      const Vec3 d{std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta), std::sin(phi)};

      Hit hit;
      if (d[2] < 0.0) {
        hit.t = cfg.sensor_height / -d[2];
        hit.normal = {0.0, 0.0, 1.0};
        hit.albedo = 0.35;
      }
      if (cfg.enclosure) {
        const double horiz = std::hypot(d[0], d[1]);
        const double t = cfg.enclosure_radius / horiz;
        if (t < hit.t) {
          hit.t = t;
          hit.normal = {-d[0] / horiz, -d[1] / horiz, 0.0};
          hit.albedo = 0.5;
          hit.glass = false;
        }
      }
      for (const Box& b : boxes) intersect_box(b, d, hit);
      if (!(hit.t <= intr.max_range)) continue;

      const std::size_t i = img.index(row, col);
      if (cfg.domain == Domain::sim) {
        img.range[i] = hit.t;
        continue;
      }
      const double cos_inc = std::abs(d[0] * hit.normal[0] + d[1] * hit.normal[1] + d[2] * hit.normal[2]);
      const double p_drop =
          (hit.glass || cos_inc < kGrazingCosine) ? std::max(cfg.drop_base, cfg.drop_glass) : cfg.drop_base;
      const double u = unit(noise);
      const double refl = hit.albedo * cos_inc * std::exp(-hit.t / 60.0) + jitter(noise);
      if (u < p_drop) continue;
      img.range[i] = hit.t;
      img.reflectance[i] = std::clamp(refl, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace drum
