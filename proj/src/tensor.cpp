#include "drum/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "drum/errors.hpp"
#include "drum/kernels.hpp"

namespace drum {

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) throw InvalidArgument("tensor data size does not match shape");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) throw InvalidArgument(std::string(what) + ": shape mismatch");
}

Tensor axpby(double a, const Tensor& x, double b, const Tensor& y) {
  require_same_shape(x, y, "axpby");
  Tensor out(x.shape());
  kernels::active().axpby(x.size(), a, x.data(), b, y.data(), out.data());
  return out;
}

Tensor scaled(const Tensor& x, double a) {
  Tensor out = x;
  for (double& v : out.values()) v *= a;
  return out;
}

Tensor clipped(const Tensor& x, double lo, double hi) {
  Tensor out = x;
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return out;
}

Tensor hadamard(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "hadamard");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return out;
}

double dot(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "dot");
  return kernels::active().dot(x.size(), x.data(), y.data());
}

double l2_norm(const Tensor& x) { return std::sqrt(kernels::active().dot(x.size(), x.data(), x.data())); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const Tensor& x) {
  return std::all_of(x.values().begin(), x.values().end(), [](double v) { return std::isfinite(v); });
}

namespace {
std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

std::uint64_t fnv1a(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

Tensor gaussian_tensor(Shape shape, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor out(shape);
  for (double& v : out.values()) v = normal(rng);
  return out;
}

}  // namespace drum
