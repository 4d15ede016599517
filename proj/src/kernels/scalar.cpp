#include "kernels_impl.hpp"

namespace pai::kernels::scalar {

void gemm_nn(GemmShape s, const double* a, const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    double* crow = c + i * s.n;
    if (!accumulate) {
      for (std::size_t j = 0; j < s.n; ++j) crow[j] = 0.0;
    }
    for (std::size_t p = 0; p < s.k; ++p) {
      const double aip = a[i * s.k + p];
      const double* brow = b + p * s.n;
      for (std::size_t j = 0; j < s.n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt(GemmShape s, const double* a, const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    const double* arow = a + i * s.k;
    for (std::size_t j = 0; j < s.n; ++j) {
      const double* brow = b + j * s.k;
      double acc = 0.0;
      for (std::size_t p = 0; p < s.k; ++p) acc += arow[p] * brow[p];
      if (accumulate) {
        c[i * s.n + j] += acc;
      } else {
        c[i * s.n + j] = acc;
      }
    }
  }
}

void gemm_tn(GemmShape s, const double* a, const double* b, double* c, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < s.m * s.n; ++i) c[i] = 0.0;
  }
  for (std::size_t p = 0; p < s.k; ++p) {
    const double* arow = a + p * s.m;
    const double* brow = b + p * s.n;
    for (std::size_t i = 0; i < s.m; ++i) {
      const double api = arow[i];
      double* crow = c + i * s.n;
      for (std::size_t j = 0; j < s.n; ++j) crow[j] += api * brow[j];
    }
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void hadamard(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void relu(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* gy, double* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += gy[i];
  }
}

const KernelTable kTable{gemm_nn, gemm_nt, gemm_tn, dot, axpy, hadamard, relu, relu_backward};

}  // namespace pai::kernels::scalar
