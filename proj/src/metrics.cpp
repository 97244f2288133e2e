#include "drum/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "drum/errors.hpp"

namespace drum {

FeatureSet FeatureSet::from_rows(const std::vector<std::vector<double>>& rows) {
  FeatureSet fs;
  if (rows.empty()) return fs;
  const std::size_t d = rows.front().size();
  fs.vectors.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw InvalidArgument("feature rows differ in dimension");
    for (std::size_t j = 0; j < d; ++j) fs.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return fs;
}

FeatureSet FeatureSet::from_matrix(const FeatureMatrix& fm) {
  FeatureSet fs;
  fs.vectors = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      fm.values.data(), static_cast<Eigen::Index>(fm.rows), static_cast<Eigen::Index>(fm.cols));
  return fs;
}

FeatureMatrix FeatureSet::to_matrix() const {
  FeatureMatrix fm;
  fm.rows = static_cast<std::size_t>(vectors.rows());
  fm.cols = static_cast<std::size_t>(vectors.cols());
  fm.values.reserve(fm.rows * fm.cols);
  for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
    for (Eigen::Index j = 0; j < vectors.cols(); ++j) fm.values.push_back(vectors(i, j));
  }
  return fm;
}

GaussianStats fit_gaussian(const FeatureSet& fs) {
  const Eigen::Index n = fs.vectors.rows();
  if (n < 2) throw InsufficientData("fit_gaussian: need at least two feature vectors");
  if (!fs.vectors.allFinite()) throw InvalidArgument("fit_gaussian: non-finite feature");
  GaussianStats g;
  g.mean = fs.vectors.colwise().mean().transpose();
  const Eigen::MatrixXd centered = fs.vectors.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  g.cov = 0.5 * (g.cov + g.cov.transpose()).eval();
  return g;
}

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericFailure("frechet_distance: eigensolver did not converge");
  return es;
}

// tr((A B)^(1/2)) for symmetric PSD A, B via the similar matrix A^(1/2) B A^(1/2).
double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const auto ea = eigen(a);
  const Eigen::VectorXd root = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * root.asDiagonal() * ea.eigenvectors().transpose();
  Eigen::MatrixXd inner = sqrt_a * b * sqrt_a;
  inner = 0.5 * (inner + inner.transpose()).eval();
  return eigen(inner).eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  const Eigen::Index d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || a.cov.cols() != d || b.cov.rows() != d || b.cov.cols() != d) {
    throw InvalidArgument("frechet_distance: dimension mismatch");
  }
  Eigen::MatrixXd ca = a.cov;
  Eigen::MatrixXd cb = b.cov;
  const double min_eig = std::min(eigen(ca).eigenvalues().minCoeff(), eigen(cb).eigenvalues().minCoeff());
  if (min_eig < kCovEigenFloor) {
    ca.diagonal().array() += kCovRidge;
    cb.diagonal().array() += kCovRidge;
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double fd = mean_term + ca.trace() + cb.trace() - 2.0 * trace_sqrt_product(ca, cb);
  if (!std::isfinite(fd)) throw NumericFailure("frechet_distance: non-finite result");
  return std::max(fd, 0.0);
}

double raydrop_ratio(const RangeImage& img) {
  if (img.pixels() == 0) return 0.0;
  const auto drops = std::count(img.range.begin(), img.range.end(), kDropRange);
  return static_cast<double>(drops) / static_cast<double>(img.pixels());
}

std::vector<double> builtin_features(const RangeImage& img) {
  const SensorIntrinsics& intr = img.intrinsics;
  const double total = static_cast<double>(img.pixels());
  std::vector<double> f(kBuiltinFeatureDim, 0.0);
  double* range_hist = f.data();
  double* refl_hist = range_hist + kRangeBins;
  double* range_blocks = refl_hist + kReflectanceBins;
  double* refl_blocks = range_blocks + kBlockRows * kBlockCols;
  std::vector<double> block_count(kBlockRows * kBlockCols, 0.0);

  for (std::size_t row = 0; row < intr.height; ++row) {
    const std::size_t br = row * kBlockRows / intr.height;
    for (std::size_t col = 0; col < intr.width; ++col) {
      const std::size_t b = br * kBlockCols + col * kBlockCols / intr.width;
      const std::size_t i = img.index(row, col);
      const double xr = normalize_range(img.range[i], intr.max_range);
      const double xv = 2.0 * img.reflectance[i] - 1.0;
      range_blocks[b] += xr;
      refl_blocks[b] += xv;
      block_count[b] += 1.0;
      if (img.is_drop(i)) continue;
      const auto rb = static_cast<std::size_t>(std::clamp(0.5 * (xr + 1.0) * kRangeBins, 0.0, kRangeBins - 1.0));
      const auto vb =
          static_cast<std::size_t>(std::clamp(img.reflectance[i] * kReflectanceBins, 0.0, kReflectanceBins - 1.0));
      range_hist[rb] += 1.0 / total;
      refl_hist[vb] += 1.0 / total;
    }
  }
  for (std::size_t b = 0; b < block_count.size(); ++b) {
    range_blocks[b] /= block_count[b];
    refl_blocks[b] /= block_count[b];
  }
  return f;
}

}  // namespace drum
