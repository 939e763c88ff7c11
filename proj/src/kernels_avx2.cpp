// AVX2+FMA variants of the tape inner loops.  This TU is the only one built
// with -mavx2 -mfma; callers reach it through kernels::active() after the
// runtime cpu check, so nothing here executes on machines without AVX2.

#include <immintrin.h>

#include <cstddef>

#include "densea/kernels.hpp"

namespace densea {
namespace kernels {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline __m256i stride_index(long s) {
  return _mm256_setr_epi64x(0, s, 2 * s, 3 * s);
}

double dot_avx2(const double* a, long sa, const double* b, long sb, size_t n) {
  size_t i = 0;
  __m256d acc = _mm256_setzero_pd();
  if (sa == 1 && sb == 1) {
    for (; i + 4 <= n; i += 4)
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  } else {
    const __m256i ia = stride_index(sa);
    const __m256i ib = stride_index(sb);
    for (; i + 4 <= n; i += 4) {
      __m256d va = _mm256_i64gather_pd(a + i * sa, ia, 8);
      __m256d vb = _mm256_i64gather_pd(b + i * sb, ib, 8);
      acc = _mm256_fmadd_pd(va, vb, acc);
    }
  }
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i * sa] * b[i * sb];
  return r;
}

double sum_avx2(const double* a, size_t n) {
  size_t i = 0;
  __m256d acc = _mm256_setzero_pd();
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i];
  return r;
}

double wsum_avx2(const double* w, const double* a, size_t n) {
  size_t i = 0;
  __m256d acc = _mm256_setzero_pd();
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(a + i), acc);
  double r = hsum(acc);
  for (; i < n; ++i) r += w[i] * a[i];
  return r;
}

void axpy_avx2(double g, const double* x, long sx, double* y, long sy, size_t n) {
  if (sy != 1) {
    // no scatter in AVX2; strided destinations stay scalar
    for (size_t i = 0; i < n; ++i) y[i * sy] += g * x[i * sx];
    return;
  }
  const __m256d vg = _mm256_set1_pd(g);
  size_t i = 0;
  if (sx == 1) {
    for (; i + 4 <= n; i += 4) {
      __m256d vy = _mm256_loadu_pd(y + i);
      vy = _mm256_fmadd_pd(vg, _mm256_loadu_pd(x + i), vy);
      _mm256_storeu_pd(y + i, vy);
    }
  } else {
    const __m256i ix = stride_index(sx);
    for (; i + 4 <= n; i += 4) {
      __m256d vx = _mm256_i64gather_pd(x + i * sx, ix, 8);
      __m256d vy = _mm256_loadu_pd(y + i);
      _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vg, vx, vy));
    }
  }
  for (; i < n; ++i) y[i] += g * x[i * sx];
}

void waxpy_avx2(double g, const double* w, double* y, size_t n) {
  const __m256d vg = _mm256_set1_pd(g);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(vg, _mm256_loadu_pd(w + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += g * w[i];
}

void addc_avx2(double g, double* y, size_t n) {
  const __m256d vg = _mm256_set1_pd(g);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), vg));
  for (; i < n; ++i) y[i] += g;
}

const Ops kAvx2 = {
    "avx2", dot_avx2, sum_avx2, wsum_avx2, axpy_avx2, waxpy_avx2, addc_avx2,
};

}  // namespace

bool avx2_available() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

const Ops& avx2_ops() { return kAvx2; }

}  // namespace kernels
}  // namespace densea
