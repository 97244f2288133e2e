// NEON (aarch64) variants. Advanced SIMD is mandatory on aarch64, so no
// runtime probe is needed. SiLU stays on the scalar path here.

#include <arm_neon.h>

#include <cmath>

#include "kernels_impl.hpp"

namespace drum::kernels::neon {

void axpby(std::size_t n, double a, const double* x, double b, const double* y, double* out) {
  const float64x2_t va = vdupq_n_f64(a);
  const float64x2_t vb = vdupq_n_f64(b);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vfmaq_f64(vmulq_f64(vb, vld1q_f64(y + i)), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) out[i] = std::fma(a, x[i], b * y[i]);
}

double dot(std::size_t n, const double* x, const double* y) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc = std::fma(x[i], y[i], acc);
  return acc;
}

void conv3x3_row(std::size_t n, const double* r0, const double* r1, const double* r2,
                 const double* w, double* out) {
  const double* rows[3] = {r0, r1, r2};
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t acc = vld1q_f64(out + i);
    for (int ky = 0; ky < 3; ++ky) {
      acc = vfmaq_n_f64(acc, vld1q_f64(rows[ky] + i), w[3 * ky]);
      acc = vfmaq_n_f64(acc, vld1q_f64(rows[ky] + i + 1), w[3 * ky + 1]);
      acc = vfmaq_n_f64(acc, vld1q_f64(rows[ky] + i + 2), w[3 * ky + 2]);
    }
    vst1q_f64(out + i, acc);
  }
  if (i < n) scalar::conv3x3_row(n - i, r0 + i, r1 + i, r2 + i, w, out + i);
}

void conv3x3_row_wgrad(std::size_t n, const double* g, const double* r0, const double* r1,
                       const double* r2, double* dw) {
  const double* rows[3] = {r0, r1, r2};
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) dw[3 * ky + kx] += dot(n, g, rows[ky] + kx);
  }
}

}  // namespace drum::kernels::neon
