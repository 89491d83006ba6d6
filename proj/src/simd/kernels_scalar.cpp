#include "scd/simd/kernels.hpp"

#include <cmath>

namespace scd::simd::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_squares_scalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double max_abs_scalar(const double* a, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::fmax(m, std::fabs(a[i]));
  return m;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar,   dot_scalar,   sum_squares_scalar,
                                 axpy_scalar,   scale_scalar, max_abs_scalar};
  return table;
}

}  // namespace scd::simd::detail
