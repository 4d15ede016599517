#pragma once

// Dense float64 inner loops used by the tensor engine.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2+FMA
// variant. The active backend is picked once at startup from CPUID and can be
// overridden (tests, reproducibility) with set_backend() or the PAI_KERNELS
// environment variable ("scalar" or "avx2").

#include <cstddef>
#include <span>
#include <string_view>

namespace pai::kernels {

enum class Backend { scalar, avx2 };

std::string_view backend_name(Backend b);

bool avx2_available();

Backend active_backend();

// Throws std::invalid_argument if the backend is not supported on this CPU.
void set_backend(Backend b);

// Row-major matrix products. `accumulate` adds into C instead of overwriting.
struct GemmShape {
  std::size_t m;
  std::size_t n;
  std::size_t k;
};

// C[m,n] = A[m,k] * B[k,n]
void gemm_nn(GemmShape s, const double* a, const double* b, double* c, bool accumulate);
// C[m,n] = A[m,k] * B[n,k]^T
void gemm_nt(GemmShape s, const double* a, const double* b, double* c, bool accumulate);
// C[m,n] = A[k,m]^T * B[k,n]
void gemm_tn(GemmShape s, const double* a, const double* b, double* c, bool accumulate);

double dot(std::span<const double> a, std::span<const double> b);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
// out = a * b elementwise
void hadamard(std::span<const double> a, std::span<const double> b, std::span<double> out);
void relu(std::span<const double> x, std::span<double> out);
// gx += (x > 0) * gy
void relu_backward(std::span<const double> x, std::span<const double> gy, std::span<double> gx);

// Direct access to one backend, bypassing dispatch. Used by equivalence tests.
struct KernelTable {
  void (*gemm_nn)(GemmShape, const double*, const double*, double*, bool);
  void (*gemm_nt)(GemmShape, const double*, const double*, double*, bool);
  void (*gemm_tn)(GemmShape, const double*, const double*, double*, bool);
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*hadamard)(const double*, const double*, double*, std::size_t);
  void (*relu)(const double*, double*, std::size_t);
  void (*relu_backward)(const double*, const double*, double*, std::size_t);
};

const KernelTable& table(Backend b);

}  // namespace pai::kernels
