#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "drum/tensor.hpp"

namespace drum::test {

inline Tensor uniform_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng = make_rng(seed, 77);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline Tensor normal_tensor(Shape shape, std::uint64_t seed) {
  Rng rng = make_rng(seed, 78);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(shape);
  for (double& v : t.values()) v = n(rng);
  return t;
}

// Fresh, empty directory under the system temp dir; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("drum_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace drum::test
