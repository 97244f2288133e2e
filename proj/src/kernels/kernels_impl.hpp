#pragma once

#include <cstddef>

#include "drum/kernels.hpp"

namespace drum::kernels {

inline constexpr double kExpClamp = 700.0;

namespace scalar {
void axpby(std::size_t n, double a, const double* x, double b, const double* y, double* out);
double dot(std::size_t n, const double* x, const double* y);
void conv3x3_row(std::size_t n, const double* r0, const double* r1, const double* r2,
                 const double* w, double* out);
void conv3x3_row_wgrad(std::size_t n, const double* g, const double* r0, const double* r1,
                       const double* r2, double* dw);
void silu(std::size_t n, const double* x, double* out);
void silu_backward(std::size_t n, const double* x, const double* gout, double* gin);
}  // namespace scalar

#if defined(DRUM_HAVE_AVX2)
namespace avx2 {
void axpby(std::size_t n, double a, const double* x, double b, const double* y, double* out);
double dot(std::size_t n, const double* x, const double* y);
void conv3x3_row(std::size_t n, const double* r0, const double* r1, const double* r2,
                 const double* w, double* out);
void conv3x3_row_wgrad(std::size_t n, const double* g, const double* r0, const double* r1,
                       const double* r2, double* dw);
void silu(std::size_t n, const double* x, double* out);
void silu_backward(std::size_t n, const double* x, const double* gout, double* gin);
}  // namespace avx2
#endif

#if defined(DRUM_HAVE_NEON)
namespace neon {
void axpby(std::size_t n, double a, const double* x, double b, const double* y, double* out);
double dot(std::size_t n, const double* x, const double* y);
void conv3x3_row(std::size_t n, const double* r0, const double* r1, const double* r2,
                 const double* w, double* out);
void conv3x3_row_wgrad(std::size_t n, const double* g, const double* r0, const double* r1,
                       const double* r2, double* dw);
}  // namespace neon
#endif

}  // namespace drum::kernels
