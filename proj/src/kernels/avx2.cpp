#include "kernels_impl.hpp"

#if PAI_HAVE_X86

#include <immintrin.h>

#define PAI_AVX2 __attribute__((target("avx2,fma")))

namespace pai::kernels::avx2 {
namespace {

PAI_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// y[0..n) += alpha * x[0..n)
PAI_AVX2 inline void axpy_row(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d y0 = _mm256_loadu_pd(y + j);
    __m256d y1 = _mm256_loadu_pd(y + j + 4);
    y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j), y0);
    y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j + 4), y1);
    _mm256_storeu_pd(y + j, y0);
    _mm256_storeu_pd(y + j + 4, y1);
  }
  for (; j + 4 <= n; j += 4) {
    _mm256_storeu_pd(y + j, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j)));
  }
  for (; j < n; ++j) y[j] += alpha * x[j];
}

PAI_AVX2 double dot_impl(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

PAI_AVX2 void gemm_nn(GemmShape s, const double* a, const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    double* crow = c + i * s.n;
    if (!accumulate) {
      for (std::size_t j = 0; j < s.n; ++j) crow[j] = 0.0;
    }
    for (std::size_t p = 0; p < s.k; ++p) {
      const double aip = a[i * s.k + p];
      if (aip != 0.0) axpy_row(aip, b + p * s.n, crow, s.n);
    }
  }
}

PAI_AVX2 void gemm_nt(GemmShape s, const double* a, const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    const double* arow = a + i * s.k;
    for (std::size_t j = 0; j < s.n; ++j) {
      const double acc = dot_impl(arow, b + j * s.k, s.k);
      if (accumulate) {
        c[i * s.n + j] += acc;
      } else {
        c[i * s.n + j] = acc;
      }
    }
  }
}

PAI_AVX2 void gemm_tn(GemmShape s, const double* a, const double* b, double* c, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < s.m * s.n; ++i) c[i] = 0.0;
  }
  for (std::size_t p = 0; p < s.k; ++p) {
    const double* arow = a + p * s.m;
    const double* brow = b + p * s.n;
    for (std::size_t i = 0; i < s.m; ++i) {
      if (arow[i] != 0.0) axpy_row(arow[i], brow, c + i * s.n, s.n);
    }
  }
}

PAI_AVX2 void axpy(double alpha, const double* x, double* y, std::size_t n) {
  axpy_row(alpha, x, y, n);
}

PAI_AVX2 void hadamard(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

PAI_AVX2 void relu(const double* x, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    // Blend instead of max so that -0.0 and NaN behave exactly like the scalar `x > 0 ? x : 0`.
    const __m256d keep = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(v, keep));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

PAI_AVX2 void relu_backward(const double* x, const double* gy, double* gx, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d keep = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d g = _mm256_and_pd(_mm256_loadu_pd(gy + i), keep);
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), g));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += gy[i];
  }
}

}  // namespace

const KernelTable kTable{gemm_nn, gemm_nt, gemm_tn, dot_impl, axpy, hadamard, relu, relu_backward};

}  // namespace pai::kernels::avx2

#endif
