#include "kernels_impl.hpp"

#include <algorithm>
#include <cmath>

namespace drum::kernels::scalar {

void axpby(std::size_t n, double a, const double* x, double b, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

double dot(std::size_t n, const double* x, const double* y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void conv3x3_row(std::size_t n, const double* r0, const double* r1, const double* r2,
                 const double* w, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    double acc = out[i];
    acc += w[0] * r0[i] + w[1] * r0[i + 1] + w[2] * r0[i + 2];
    acc += w[3] * r1[i] + w[4] * r1[i + 1] + w[5] * r1[i + 2];
    acc += w[6] * r2[i] + w[7] * r2[i + 1] + w[8] * r2[i + 2];
    out[i] = acc;
  }
}

void conv3x3_row_wgrad(std::size_t n, const double* g, const double* r0, const double* r1,
                       const double* r2, double* dw) {
  const double* rows[3] = {r0, r1, r2};
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      dw[3 * ky + kx] += dot(n, g, rows[ky] + kx);
    }
  }
}

namespace {
double sigmoid(double x) {
  // exp argument kept finite; matches the clamp used by the vector variants
  const double e = std::exp(-std::clamp(x, -kExpClamp, kExpClamp));
  return 1.0 / (1.0 + e);
}
}  // namespace

void silu(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * sigmoid(x[i]);
}

void silu_backward(std::size_t n, const double* x, const double* gout, double* gin) {
  for (std::size_t i = 0; i < n; ++i) {
    const double s = sigmoid(x[i]);
    gin[i] = gout[i] * s * (1.0 + x[i] * (1.0 - s));
  }
}

}  // namespace drum::kernels::scalar
