#pragma once

// Data-parallel inner loops used by the tensor arithmetic and the denoiser
// network. Every kernel has a scalar reference implementation; SIMD variants
// (AVX2+FMA on x86-64, NEON on aarch64) are selected once at startup and are
// equivalence-tested against the reference.

#include <cstddef>
#include <string_view>
#include <vector>

namespace drum::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);

struct KernelTable {
  Isa isa;

  // out[i] = a * x[i] + b * y[i]; out may alias x or y.
  void (*axpby)(std::size_t n, double a, const double* x, double b, const double* y, double* out);

  double (*dot)(std::size_t n, const double* x, const double* y);

  // out[i] += sum_{ky,kx} w[3*ky+kx] * rows[ky][i+kx], rows have n+2 readable entries.
  void (*conv3x3_row)(std::size_t n, const double* r0, const double* r1, const double* r2,
                      const double* w, double* out);

  // dw[3*ky+kx] += sum_i g[i] * rows[ky][i+kx]
  void (*conv3x3_row_wgrad)(std::size_t n, const double* g, const double* r0, const double* r1,
                            const double* r2, double* dw);

  // out[i] = x[i] * sigmoid(x[i])
  void (*silu)(std::size_t n, const double* x, double* out);

  // gin[i] = gout[i] * d/dx silu(x[i])
  void (*silu_backward)(std::size_t n, const double* x, const double* gout, double* gin);
};

const KernelTable& scalar_table();

// nullptr when the variant is not compiled in or the CPU lacks support.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// The table used by the library. Chosen on first use from DRUM_SIMD
// (scalar|avx2|neon|auto, default auto) and the CPU's capabilities.
const KernelTable& active();

// Overrides the active table; throws InvalidArgument if the ISA is unavailable.
void select(Isa isa);

std::vector<Isa> available();

}  // namespace drum::kernels
