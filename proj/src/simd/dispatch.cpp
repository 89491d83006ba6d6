#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "scd/simd/kernels.hpp"

namespace scd::simd {
namespace {

bool cpu_has_avx2() {
#if defined(SCD_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa pick_default() {
  if (const char* env = std::getenv("SCD_SIMD")) {
    std::string v(env);
    if (v == "scalar") return Isa::scalar;
    if (v == "avx2" && cpu_has_avx2()) return Isa::avx2;
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&kernels_for(pick_default())};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2: return cpu_has_avx2();
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_available(isa)) {
    throw std::invalid_argument("SIMD variant not available: " + std::string(isa_name(isa)));
  }
#if defined(SCD_HAVE_AVX2)
  if (isa == Isa::avx2) return detail::avx2_table();
#endif
  return detail::scalar_table();
}

const KernelTable& kernels() { return *active_slot().load(std::memory_order_acquire); }

Isa active_isa() { return kernels().isa; }

void force_isa(Isa isa) { active_slot().store(&kernels_for(isa), std::memory_order_release); }

}  // namespace scd::simd
