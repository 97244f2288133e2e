#pragma once

// Distribution-level fidelity: Gaussian fits of feature sets, the Frechet
// distance between them, raydrop statistics and a small built-in extractor.

#include <Eigen/Dense>
#include <vector>

#include "drum/io.hpp"
#include "drum/lidar.hpp"

namespace drum {

struct FeatureSet {
  Eigen::MatrixXd vectors;  // N x D, one row per sample

  static FeatureSet from_rows(const std::vector<std::vector<double>>& rows);
  static FeatureSet from_matrix(const FeatureMatrix& fm);
  FeatureMatrix to_matrix() const;
};

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Sample mean and unbiased, symmetrized covariance. Throws InsufficientData if N < 2.
GaussianStats fit_gaussian(const FeatureSet& fs);

// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Minimum eigenvalue below which both covariances get kCovRidge * I added.
inline constexpr double kCovEigenFloor = 1e-10;
inline constexpr double kCovRidge = 1e-6;

double raydrop_ratio(const RangeImage& img);

// Layout of the built-in feature vector.
inline constexpr std::size_t kRangeBins = 32;
inline constexpr std::size_t kReflectanceBins = 16;
inline constexpr std::size_t kBlockRows = 2;
inline constexpr std::size_t kBlockCols = 4;
inline constexpr std::size_t kBuiltinFeatureDim = kRangeBins + kReflectanceBins + 2 * kBlockRows * kBlockCols;

// [0, 32): histogram of the normalized range over [-1, 1] for valid returns,
//          each bin divided by the total pixel count;
// [32, 48): histogram of reflectance over [0, 1] for valid returns, same scaling;
// [48, 56): normalized range means over a 2 x 4 grid of (elevation, azimuth)
//          blocks, row-major, drops counting as -1;
// [56, 64): the same block means for normalized reflectance.
std::vector<double> builtin_features(const RangeImage& img);

}  // namespace drum
