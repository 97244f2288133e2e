#include <atomic>
#include <cstdlib>
#include <string>

#include "drum/errors.hpp"
#include "kernels_impl.hpp"

namespace drum::kernels {

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar,       scalar::axpby, scalar::dot,
                                 scalar::conv3x3_row, scalar::conv3x3_row_wgrad,
                                 scalar::silu,       scalar::silu_backward};
  return table;
}

const KernelTable* avx2_table() {
#if defined(DRUM_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  static const KernelTable table{Isa::avx2,       avx2::axpby, avx2::dot,
                                 avx2::conv3x3_row, avx2::conv3x3_row_wgrad,
                                 avx2::silu,       avx2::silu_backward};
  return supported ? &table : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(DRUM_HAVE_NEON)
  static const KernelTable table{Isa::neon,       neon::axpby, neon::dot,
                                 neon::conv3x3_row, neon::conv3x3_row_wgrad,
                                 scalar::silu,     scalar::silu_backward};
  return &table;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar: return &scalar_table();
    case Isa::avx2: return avx2_table();
    case Isa::neon: return neon_table();
  }
  return nullptr;
}

const KernelTable* detect() {
  const char* env = std::getenv("DRUM_SIMD");
  const std::string want = env ? env : "auto";
  if (want == "scalar") return &scalar_table();
  if (want == "avx2" && avx2_table()) return avx2_table();
  if (want == "neon" && neon_table()) return neon_table();
  if (const auto* t = avx2_table()) return t;
  if (const auto* t = neon_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> ptr{detect()};
  return ptr;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) {
  const KernelTable* t = table_for(isa);
  if (t == nullptr) throw InvalidArgument("kernel ISA not available: " + std::string(to_string(isa)));
  current().store(t, std::memory_order_release);
}

std::vector<Isa> available() {
  std::vector<Isa> out{Isa::scalar};
  if (avx2_table()) out.push_back(Isa::avx2);
  if (neon_table()) out.push_back(Isa::neon);
  return out;
}

}  // namespace drum::kernels
