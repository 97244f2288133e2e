// AVX2 + FMA variants. Compiled with -mavx2 -mfma; only reached through the
// dispatch table after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "kernels_impl.hpp"

namespace drum::kernels::avx2 {

namespace {

double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// exp(x) for x in [-kExpClamp, kExpClamp]: 2^k * P(r), |r| <= ln2/2, degree-13 Taylor.
__m256d exp_pd(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
  const __m256d magic = _mm256_set1_pd(6755399441055744.0);  // 2^52 + 2^51

  x = _mm256_max_pd(_mm256_min_pd(x, _mm256_set1_pd(kExpClamp)), _mm256_set1_pd(-kExpClamp));
  const __m256d k = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, ln2_hi, x);
  r = _mm256_fnmadd_pd(k, ln2_lo, r);

  static constexpr double c[] = {
      1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
      1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,      1.0 / 720.0,
      1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,         0.5,
      1.0,                1.0};
  __m256d p = _mm256_set1_pd(c[0]);
  for (int i = 1; i < 14; ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[i]));

  const __m256i ki = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(k, magic)), _mm256_castpd_si256(magic));
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(ki, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

__m256d sigmoid_pd(__m256d x) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d e = exp_pd(_mm256_sub_pd(_mm256_setzero_pd(), x));
  return _mm256_div_pd(one, _mm256_add_pd(one, e));
}

}  // namespace

void axpby(std::size_t n, double a, const double* x, double b, const double* y, double* out) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_mul_pd(vb, _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(out + i, r);
  }
  for (; i < n; ++i) out[i] = std::fma(a, x[i], b * y[i]);
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc = std::fma(x[i], y[i], acc);
  return acc;
}

void conv3x3_row(std::size_t n, const double* r0, const double* r1, const double* r2,
                 const double* w, double* out) {
  const __m256d w0 = _mm256_set1_pd(w[0]), w1 = _mm256_set1_pd(w[1]), w2 = _mm256_set1_pd(w[2]);
  const __m256d w3 = _mm256_set1_pd(w[3]), w4 = _mm256_set1_pd(w[4]), w5 = _mm256_set1_pd(w[5]);
  const __m256d w6 = _mm256_set1_pd(w[6]), w7 = _mm256_set1_pd(w[7]), w8 = _mm256_set1_pd(w[8]);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_loadu_pd(out + i);
    acc = _mm256_fmadd_pd(w0, _mm256_loadu_pd(r0 + i), acc);
    acc = _mm256_fmadd_pd(w1, _mm256_loadu_pd(r0 + i + 1), acc);
    acc = _mm256_fmadd_pd(w2, _mm256_loadu_pd(r0 + i + 2), acc);
    acc = _mm256_fmadd_pd(w3, _mm256_loadu_pd(r1 + i), acc);
    acc = _mm256_fmadd_pd(w4, _mm256_loadu_pd(r1 + i + 1), acc);
    acc = _mm256_fmadd_pd(w5, _mm256_loadu_pd(r1 + i + 2), acc);
    acc = _mm256_fmadd_pd(w6, _mm256_loadu_pd(r2 + i), acc);
    acc = _mm256_fmadd_pd(w7, _mm256_loadu_pd(r2 + i + 1), acc);
    acc = _mm256_fmadd_pd(w8, _mm256_loadu_pd(r2 + i + 2), acc);
    _mm256_storeu_pd(out + i, acc);
  }
  if (i < n) scalar::conv3x3_row(n - i, r0 + i, r1 + i, r2 + i, w, out + i);
}

void conv3x3_row_wgrad(std::size_t n, const double* g, const double* r0, const double* r1,
                       const double* r2, double* dw) {
  __m256d a[9];
  for (auto& v : a) v = _mm256_setzero_pd();
  const double* rows[3] = {r0, r1, r2};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    for (int ky = 0; ky < 3; ++ky) {
      a[3 * ky + 0] = _mm256_fmadd_pd(vg, _mm256_loadu_pd(rows[ky] + i), a[3 * ky + 0]);
      a[3 * ky + 1] = _mm256_fmadd_pd(vg, _mm256_loadu_pd(rows[ky] + i + 1), a[3 * ky + 1]);
      a[3 * ky + 2] = _mm256_fmadd_pd(vg, _mm256_loadu_pd(rows[ky] + i + 2), a[3 * ky + 2]);
    }
  }
  for (int k = 0; k < 9; ++k) dw[k] += hsum(a[k]);
  if (i < n) scalar::conv3x3_row_wgrad(n - i, g + i, r0 + i, r1 + i, r2 + i, dw);
}

void silu(std::size_t n, const double* x, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(out + i, _mm256_mul_pd(v, sigmoid_pd(v)));
  }
  if (i < n) scalar::silu(n - i, x + i, out + i);
}

void silu_backward(std::size_t n, const double* x, const double* gout, double* gin) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d s = sigmoid_pd(v);
    const __m256d d = _mm256_mul_pd(s, _mm256_fmadd_pd(v, _mm256_sub_pd(one, s), one));
    _mm256_storeu_pd(gin + i, _mm256_mul_pd(_mm256_loadu_pd(gout + i), d));
  }
  if (i < n) scalar::silu_backward(n - i, x + i, gout + i, gin + i);
}

}  // namespace drum::kernels::avx2
