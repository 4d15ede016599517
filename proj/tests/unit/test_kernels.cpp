#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "pai/kernels.hpp"

using namespace pai::kernels;

namespace {

std::vector<double> randv(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  // Exact zeros exercise the zero-skip paths.
  for (std::size_t i = 0; i < n; i += 7) v[i] = 0.0;
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("scalar gemm variants agree with a naive triple loop") {
  std::mt19937_64 rng(1);
  const GemmShape s{5, 7, 3};
  const auto a = randv(s.m * s.k, rng), b = randv(s.k * s.n, rng);
  std::vector<double> want(s.m * s.n, 0.0);
  for (std::size_t i = 0; i < s.m; ++i)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t p = 0; p < s.k; ++p) want[i * s.n + j] += a[i * s.k + p] * b[p * s.n + j];
  const KernelTable& t = table(Backend::scalar);
  std::vector<double> c(s.m * s.n, 123.0);
  t.gemm_nn(s, a.data(), b.data(), c.data(), false);
  CHECK(max_abs_diff(c, want) < 1e-12);

  // B transposed: bt is n x k.
  std::vector<double> bt(s.n * s.k);
  for (std::size_t p = 0; p < s.k; ++p)
    for (std::size_t j = 0; j < s.n; ++j) bt[j * s.k + p] = b[p * s.n + j];
  std::fill(c.begin(), c.end(), 0.0);
  t.gemm_nt(s, a.data(), bt.data(), c.data(), false);
  CHECK(max_abs_diff(c, want) < 1e-12);

  // A transposed: at is k x m. Accumulate onto a copy of want.
  std::vector<double> at(s.k * s.m);
  for (std::size_t i = 0; i < s.m; ++i)
    for (std::size_t p = 0; p < s.k; ++p) at[p * s.m + i] = a[i * s.k + p];
  c = want;
  t.gemm_tn(s, at.data(), b.data(), c.data(), true);
  for (double& w : want) w *= 2.0;
  CHECK(max_abs_diff(c, want) < 1e-12);
}

TEST_CASE("avx2 kernels match scalar kernels") {
  if (!avx2_available()) {
    MESSAGE("AVX2+FMA unavailable; equivalence not exercised");
    CHECK_THROWS_AS(table(Backend::avx2), std::invalid_argument);
    return;
  }
  const KernelTable& sc = table(Backend::scalar);
  const KernelTable& vx = table(Backend::avx2);
  std::mt19937_64 rng(2);
  for (const GemmShape s : {GemmShape{1, 1, 1}, GemmShape{3, 5, 7}, GemmShape{17, 9, 13}, GemmShape{64, 64, 64},
                            GemmShape{2, 33, 4}}) {
    const auto a = randv(s.m * s.k, rng), b = randv(s.k * s.n, rng), bt = randv(s.n * s.k, rng),
               at = randv(s.k * s.m, rng), c0 = randv(s.m * s.n, rng);
    for (bool acc : {false, true}) {
      std::vector<double> x = c0, y = c0;
      sc.gemm_nn(s, a.data(), b.data(), x.data(), acc);
      vx.gemm_nn(s, a.data(), b.data(), y.data(), acc);
      CHECK(max_abs_diff(x, y) < 1e-12);
      x = c0, y = c0;
      sc.gemm_nt(s, a.data(), bt.data(), x.data(), acc);
      vx.gemm_nt(s, a.data(), bt.data(), y.data(), acc);
      CHECK(max_abs_diff(x, y) < 1e-12);
      x = c0, y = c0;
      sc.gemm_tn(s, at.data(), b.data(), x.data(), acc);
      vx.gemm_tn(s, at.data(), b.data(), y.data(), acc);
      CHECK(max_abs_diff(x, y) < 1e-12);
    }
  }
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 31u, 100u}) {
    const auto x = randv(n, rng), y0 = randv(n, rng);
    CHECK(std::abs(sc.dot(x.data(), y0.data(), n) - vx.dot(x.data(), y0.data(), n)) < 1e-12);
    std::vector<double> p = y0, q = y0;
    sc.axpy(0.7, x.data(), p.data(), n);
    vx.axpy(0.7, x.data(), q.data(), n);
    CHECK(max_abs_diff(p, q) < 1e-15);
    sc.hadamard(x.data(), y0.data(), p.data(), n);
    vx.hadamard(x.data(), y0.data(), q.data(), n);
    CHECK(p == q);
    sc.relu(x.data(), p.data(), n);
    vx.relu(x.data(), q.data(), n);
    CHECK(p == q);
    p = y0, q = y0;
    sc.relu_backward(x.data(), y0.data(), p.data(), n);
    vx.relu_backward(x.data(), y0.data(), q.data(), n);
    CHECK(p == q);
  }
}

TEST_CASE("relu backward adds the gradient only where the input is positive") {
  const std::vector<double> x = {-1.0, 0.0, 2.0};
  const std::vector<double> gy = {5.0, 5.0, 5.0};
  std::vector<double> gx = {1.0, 1.0, 1.0};
  relu_backward(x, gy, gx);
  CHECK(gx == std::vector<double>{1.0, 1.0, 6.0});
}

TEST_CASE("dispatch wrappers reject length mismatches and honour set_backend") {
  std::vector<double> a(3), b(4);
  CHECK_THROWS_AS(dot(a, b), std::invalid_argument);
  CHECK_THROWS_AS(axpy(1.0, a, b), std::invalid_argument);
  const Backend before = active_backend();
  set_backend(Backend::scalar);
  CHECK(active_backend() == Backend::scalar);
  CHECK(backend_name(Backend::scalar) == "scalar");
  set_backend(before);
}
