#pragma once

// Dense double-precision kernels used by the similarity, TF-IDF and
// classifier inner loops. Every kernel has a scalar reference implementation;
// wider variants are picked at runtime from what the CPU reports.

#include <cstddef>
#include <span>
#include <string_view>

namespace scd::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_squares)(const double* a, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*scale)(double alpha, double* x, std::size_t n);
  double (*max_abs)(const double* a, std::size_t n);
};

namespace detail {
const KernelTable& scalar_table();
#if defined(SCD_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
}  // namespace detail

/// True when the variant was compiled in and the running CPU supports it.
bool isa_available(Isa isa);

/// Best available variant, unless overridden by force_isa() or by the
/// SCD_SIMD environment variable ("scalar" or "avx2") at first use.
Isa active_isa();

/// Throws std::invalid_argument when the requested variant is unavailable.
void force_isa(Isa isa);

const KernelTable& kernels();
const KernelTable& kernels_for(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return kernels().dot(a.data(), b.data(), a.size());
}

inline double sum_squares(std::span<const double> a) {
  return kernels().sum_squares(a.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  kernels().axpy(alpha, x.data(), y.data(), x.size());
}

inline void scale(double alpha, std::span<double> x) {
  kernels().scale(alpha, x.data(), x.size());
}

inline double max_abs(std::span<const double> a) {
  return kernels().max_abs(a.data(), a.size());
}

}  // namespace scd::simd
