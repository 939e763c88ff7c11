#pragma once

#include <cstddef>
#include <string>

namespace densea {
namespace kernels {

// Hot inner loops of the tape live behind this table so the same graph code
// runs on plain scalar arithmetic or on AVX2, chosen once at startup (or per
// call to select()).  Every entry has a scalar reference implementation; the
// vector variants must agree with it to ~1e-12 relative.
struct Ops {
  const char* name;

  // sum_i a[i*sa] * b[i*sb]
  double (*dot)(const double* a, long sa, const double* b, long sb, size_t n);
  // sum_i a[i]
  double (*sum)(const double* a, size_t n);
  // sum_i w[i] * a[i]
  double (*wsum)(const double* w, const double* a, size_t n);
  // y[i*sy] += g * x[i*sx]   (adjoint accumulation for dot)
  void (*axpy)(double g, const double* x, long sx, double* y, long sy, size_t n);
  // y[i] += g * w[i]
  void (*waxpy)(double g, const double* w, double* y, size_t n);
  // y[i] += g
  void (*addc)(double g, double* y, size_t n);
};

const Ops& scalar_ops();
bool avx2_available();        // compiled in AND supported by this cpu
const Ops& avx2_ops();        // throws CapabilityError-style if unavailable

// Active table.  Initialized from DENSEA_KERNELS (scalar|avx2|auto, default
// auto = best available); select() overrides at runtime.
const Ops& active();
void select(const std::string& which);  // "scalar" | "avx2" | "auto"

}  // namespace kernels
}  // namespace densea
