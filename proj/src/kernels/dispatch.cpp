#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels_impl.hpp"

namespace pai::kernels {
namespace {

Backend detect() {
  if (const char* env = std::getenv("PAI_KERNELS")) {
    const std::string_view want(env);
    if (want == "scalar") return Backend::scalar;
    if (want == "avx2" && avx2_available()) return Backend::avx2;
  }
  return avx2_available() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

const KernelTable& active() { return table(current().load(std::memory_order_relaxed)); }

}  // namespace

std::string_view backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

bool avx2_available() {
#if PAI_HAVE_X86
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

Backend active_backend() { return current().load(); }

void set_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_available()) {
    throw std::invalid_argument("kernels: AVX2+FMA not supported on this CPU");
  }
  current().store(b);
}

const KernelTable& table(Backend b) {
#if PAI_HAVE_X86
  if (b == Backend::avx2) {
    if (!avx2_available()) throw std::invalid_argument("kernels: AVX2+FMA not supported on this CPU");
    return avx2::kTable;
  }
#else
  if (b == Backend::avx2) throw std::invalid_argument("kernels: AVX2 backend not compiled in");
#endif
  return scalar::kTable;
}

void gemm_nn(GemmShape s, const double* a, const double* b, double* c, bool accumulate) {
  active().gemm_nn(s, a, b, c, accumulate);
}

void gemm_nt(GemmShape s, const double* a, const double* b, double* c, bool accumulate) {
  active().gemm_nt(s, a, b, c, accumulate);
}

void gemm_tn(GemmShape s, const double* a, const double* b, double* c, bool accumulate) {
  active().gemm_tn(s, a, b, c, accumulate);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("kernels::dot: length mismatch");
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("kernels::axpy: length mismatch");
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void hadamard(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  if (a.size() != b.size() || a.size() != out.size()) {
    throw std::invalid_argument("kernels::hadamard: length mismatch");
  }
  active().hadamard(a.data(), b.data(), out.data(), a.size());
}

void relu(std::span<const double> x, std::span<double> out) {
  if (x.size() != out.size()) throw std::invalid_argument("kernels::relu: length mismatch");
  active().relu(x.data(), out.data(), x.size());
}

void relu_backward(std::span<const double> x, std::span<const double> gy, std::span<double> gx) {
  if (x.size() != gy.size() || x.size() != gx.size()) {
    throw std::invalid_argument("kernels::relu_backward: length mismatch");
  }
  active().relu_backward(x.data(), gy.data(), gx.data(), x.size());
}

}  // namespace pai::kernels
