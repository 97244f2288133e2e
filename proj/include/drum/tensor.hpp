#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace drum {

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t plane() const { return height * width; }
  std::size_t size() const { return channels * height * width; }
  bool operator==(const Shape&) const = default;
};

// Dense C x H x W tensor of doubles, row-major within each channel plane.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::span<double> channel(std::size_t c) { return {data_.data() + c * shape_.plane(), shape_.plane()}; }
  std::span<const double> channel(std::size_t c) const {
    return {data_.data() + c * shape_.plane(), shape_.plane()};
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * shape_.height + y) * shape_.width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{};
  std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// a * x + b * y through the active SIMD kernel table.
Tensor axpby(double a, const Tensor& x, double b, const Tensor& y);

Tensor scaled(const Tensor& x, double a);
Tensor clipped(const Tensor& x, double lo, double hi);
Tensor hadamard(const Tensor& x, const Tensor& y);

double dot(const Tensor& x, const Tensor& y);
double l2_norm(const Tensor& x);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& x);

// Per-sample random stream. Each translation or scene owns one; never shared.
using Rng = std::mt19937_64;

// Derives an independent stream from (seed, stream index) via SplitMix64 mixing.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

std::uint64_t fnv1a(std::span<const char> bytes);

Tensor gaussian_tensor(Shape shape, Rng& rng);

}  // namespace drum
