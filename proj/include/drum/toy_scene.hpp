#pragma once

// Procedural raycast scenes standing in for a simulator (sim) and a real
// sensor (real): a ground plane, axis-aligned boxes and an optional
// cylindrical enclosure, seen from a sensor at the origin.

#include <cstdint>

#include "drum/lidar.hpp"

namespace drum {

enum class Domain { sim, real };

struct ToySceneConfig {
  Domain domain = Domain::sim;
  std::uint32_t n_boxes = 6;
  double drop_base = 0.1;      // per-return drop probability in the real domain
  double drop_glass = 0.6;     // drop probability on glass and at grazing incidence
  double glass_fraction = 0.3; // probability that a box is glass
  std::uint64_t seed = 0;
  double sensor_height = 1.73;   // meters above the ground plane
  bool enclosure = true;         // cylindrical wall so that every ray returns
  double enclosure_radius = 45.0;

  void validate() const;
};

// Incidence cosine below which a return counts as grazing.
inline constexpr double kGrazingCosine = 0.08;

// Box layout depends only on the seed, so sim and real scans of the same seed
// see the same geometry; real-domain noise uses a separate stream.
RangeImage gen_toy_scene(const ToySceneConfig& cfg, const SensorIntrinsics& intr);

}  // namespace drum
