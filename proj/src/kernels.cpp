#include "densea/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "densea/common.hpp"

namespace densea {
namespace kernels {

namespace {

double dot_scalar(const double* a, long sa, const double* b, long sb, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i * sa] * b[i * sb];
  return acc;
}

double sum_scalar(const double* a, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

double wsum_scalar(const double* w, const double* a, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += w[i] * a[i];
  return acc;
}

void axpy_scalar(double g, const double* x, long sx, double* y, long sy, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i * sy] += g * x[i * sx];
}

void waxpy_scalar(double g, const double* w, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += g * w[i];
}

void addc_scalar(double g, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += g;
}

const Ops kScalar = {
    "scalar", dot_scalar, sum_scalar, wsum_scalar, axpy_scalar, waxpy_scalar, addc_scalar,
};

std::atomic<const Ops*> g_active{nullptr};

const Ops* pick(const std::string& which) {
  if (which == "scalar") return &scalar_ops();
  if (which == "avx2") {
    if (!avx2_available()) throw ConfigError("kernels: avx2 requested but unavailable on this machine");
    return &avx2_ops();
  }
  if (which == "auto" || which.empty()) return avx2_available() ? &avx2_ops() : &scalar_ops();
  throw ConfigError("kernels: unknown selector '" + which + "' (want scalar|avx2|auto)");
}

const Ops* init_from_env() {
  const char* e = std::getenv("DENSEA_KERNELS");
  const Ops* ops = pick(e ? e : "auto");
  log_debug(std::string("kernels: using ") + ops->name);
  return ops;
}

}  // namespace

const Ops& scalar_ops() { return kScalar; }

#if !DENSEA_HAVE_AVX2_TU
bool avx2_available() { return false; }
const Ops& avx2_ops() { throw ConfigError("kernels: built without avx2 support"); }
#endif

const Ops& active() {
  const Ops* ops = g_active.load(std::memory_order_acquire);
  if (!ops) {
    ops = init_from_env();
    g_active.store(ops, std::memory_order_release);
  }
  return *ops;
}

void select(const std::string& which) {
  g_active.store(pick(which), std::memory_order_release);
}

}  // namespace kernels
}  // namespace densea
