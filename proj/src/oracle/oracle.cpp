#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include "pai/csv.hpp"
#include "pai/oracle.hpp"
#include "pai/saliency.hpp"

namespace pai {

namespace {

double checked(const ScalarFn& f, std::span<const double> x) {
  const double v = f(x);
  if (!std::isfinite(v)) throw std::domain_error("finite difference: non-finite loss");
  return v;
}

// Advances `idx` (sorted, values < n) to the next k-combination; false at the end.
bool next_combination(std::vector<std::size_t>& idx, std::size_t n) {
  const std::size_t k = idx.size();
  std::size_t i = k;
  while (i > 0) {
    --i;
    if (idx[i] < n - k + i) {
      ++idx[i];
      for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
      return true;
    }
  }
  return false;
}

std::vector<std::size_t> first_combination(std::size_t k) {
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  return idx;
}

}  // namespace

std::vector<double> fd_gradient(const ScalarFn& f, std::span<const double> theta, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_gradient: h must be > 0");
  std::vector<double> x(theta.begin(), theta.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = checked(f, x);
    x[i] = orig - h;
    const double down = checked(f, x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

std::vector<double> fd_hessian(const ScalarFn& f, std::span<const double> theta, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_hessian: h must be > 0");
  const std::size_t n = theta.size();
  std::vector<double> x(theta.begin(), theta.end());
  std::vector<double> H(n * n);
  const double f0 = checked(f, x);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = checked(f, x);
    x[i] = xi - h;
    const double fm = checked(f, x);
    x[i] = xi;
    H[i * n + i] = (fp - 2.0 * f0 + fm) / (h * h);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double xj = x[j];
      double corner[4];
      const double si[4] = {1, 1, -1, -1};
      const double sj[4] = {1, -1, 1, -1};
      for (int c = 0; c < 4; ++c) {
        x[i] = xi + si[c] * h;
        x[j] = xj + sj[c] * h;
        corner[c] = checked(f, x);
      }
      x[i] = xi;
      x[j] = xj;
      const double hij = (corner[0] - corner[1] - corner[2] + corner[3]) / (4.0 * h * h);
      H[i * n + j] = hij;
      H[j * n + i] = hij;
    }
  }
  return H;
}

std::size_t choose(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    const std::size_t num = n - k + i;
    // r * num / i is exact at every step; guard the multiplication.
    if (r > std::numeric_limits<std::size_t>::max() / num) return std::numeric_limits<std::size_t>::max();
    r = r * num / i;
  }
  return r;
}

BruteForceResult brute_force_best_mask(const PrunableModel& model, std::size_t k, std::span<const Batch> batches,
                                       std::size_t jobs) {
  const std::size_t m = model.num_weights();
  if (k < 1 || k > m) throw std::invalid_argument("brute_force_best_mask: need 1 <= k <= m");
  if (batches.empty()) throw std::invalid_argument("brute_force_best_mask: at least one batch is required");
  const std::size_t total = choose(m, k);
  if (total > kBruteForceLimit) {
    throw std::length_error("brute_force_best_mask: C(" + std::to_string(m) + "," + std::to_string(k) + ") = " +
                            std::to_string(total) + " masks exceeds the limit of " + std::to_string(kBruteForceLimit) +
                            "; shrink m");
  }
  std::vector<std::vector<std::size_t>> combos;
  combos.reserve(total);
  std::vector<std::size_t> idx = first_combination(k);
  do combos.push_back(idx);
  while (next_combination(idx, m));

  std::vector<double> values(combos.size());
  const auto work = [&](std::size_t begin, std::size_t end) {
    Mask mask(m, 0);
    for (std::size_t c = begin; c < end; ++c) {
      std::fill(mask.begin(), mask.end(), 0);
      for (std::size_t i : combos[c]) mask[i] = 1;
      values[c] = mask_saliency(model, mask, Semantics::pruned, batches);
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, combos.size()));
  if (jobs == 1) {
    work(0, combos.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (combos.size() + jobs - 1) / jobs;
    for (std::size_t j = 0; j < jobs; ++j) {
      const std::size_t b = j * per;
      const std::size_t e = std::min(combos.size(), b + per);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& t : pool) t.join();
  }

  std::size_t best = 0;
  for (std::size_t c = 1; c < values.size(); ++c) {
    if (values[c] > values[best]) best = c;
  }
  BruteForceResult r;
  r.mask.assign(m, 0);
  for (std::size_t i : combos[best]) r.mask[i] = 1;
  r.saliency = values[best];
  r.evaluated = combos.size();
  return r;
}

LocalOptReport local_optimality(const PrunableModel& model, const Mask& c_t, const Mask& c_next, std::size_t p,
                                std::span<const Batch> batches, std::optional<SwapSampling> sampling) {
  const std::size_t m = model.num_weights();
  if (c_t.size() != m || c_next.size() != m) throw std::invalid_argument("local_optimality: mask length differs from m");
  if (batches.empty()) throw std::invalid_argument("local_optimality: at least one batch is required");
  std::vector<std::size_t> kept;
  std::vector<std::size_t> dropped;
  for (std::size_t i = 0; i < m; ++i) {
    if (c_next[i] && !c_t[i]) throw std::invalid_argument("local_optimality: supp(c_next) is not inside supp(c_t)");
    if (c_next[i]) kept.push_back(i);
    else if (c_t[i]) dropped.push_back(i);
  }
  if (p > kept.size() || p > dropped.size()) {
    throw std::invalid_argument("local_optimality: p=" + std::to_string(p) + " exceeds min(|c_next|, |c_t \\ c_next|) = " +
                                std::to_string(std::min(kept.size(), dropped.size())));
  }
  LocalOptReport r;
  r.p = p;
  r.base_saliency = mask_saliency(model, c_next, Semantics::pruned, batches);
  if (p == 0) return r;

  double worst = -std::numeric_limits<double>::infinity();
  Mask zeta = c_next;
  const auto evaluate = [&](const std::vector<std::size_t>& minus, const std::vector<std::size_t>& plus) {
    for (std::size_t i : minus) zeta[kept[i]] = 0;
    for (std::size_t i : plus) zeta[dropped[i]] = 1;
    worst = std::max(worst, mask_saliency(model, zeta, Semantics::pruned, batches) - r.base_saliency);
    for (std::size_t i : minus) zeta[kept[i]] = 1;
    for (std::size_t i : plus) zeta[dropped[i]] = 0;
    ++r.swaps;
  };

  if (sampling) {
    if (sampling->samples == 0) throw std::invalid_argument("local_optimality: sampling needs at least one sample");
    r.sampled = true;
    std::mt19937_64 rng(sampling->seed);
    std::vector<std::size_t> kp(kept.size());
    std::vector<std::size_t> dp(dropped.size());
    for (std::size_t s = 0; s < sampling->samples; ++s) {
      for (std::size_t i = 0; i < kp.size(); ++i) kp[i] = i;
      for (std::size_t i = 0; i < dp.size(); ++i) dp[i] = i;
      // Partial Fisher-Yates: the first p entries are a uniform p-subset.
      for (std::size_t i = 0; i < p; ++i) {
        std::swap(kp[i], kp[i + std::uniform_int_distribution<std::size_t>(0, kp.size() - 1 - i)(rng)]);
        std::swap(dp[i], dp[i + std::uniform_int_distribution<std::size_t>(0, dp.size() - 1 - i)(rng)]);
      }
      evaluate(std::vector<std::size_t>(kp.begin(), kp.begin() + static_cast<std::ptrdiff_t>(p)),
               std::vector<std::size_t>(dp.begin(), dp.begin() + static_cast<std::ptrdiff_t>(p)));
    }
  } else {
    const std::size_t a = choose(kept.size(), p);
    const std::size_t b = choose(dropped.size(), p);
    if (a > kSwapLimit || b > kSwapLimit || a * b > kSwapLimit) {
      throw std::length_error("local_optimality: more than " + std::to_string(kSwapLimit) +
                              " swaps; use p=1 or sampling mode");
    }
    std::vector<std::size_t> minus = first_combination(p);
    do {
      std::vector<std::size_t> plus = first_combination(p);
      do evaluate(minus, plus);
      while (next_combination(plus, dropped.size()));
    } while (next_combination(minus, kept.size()));
  }
  r.worst_slack = worst;
  return r;
}

void write_local_opt_csv(std::ostream& out, const std::vector<LocalOptReport>& reports) {
  csv::write_row(out, {"p", "base_saliency", "worst_slack", "swaps", "sampled"});
  for (const auto& r : reports) {
    csv::write_row(out, {csv::num(r.p), csv::num(r.base_saliency), csv::num(r.worst_slack), csv::num(r.swaps),
                         r.sampled ? "1" : "0"});
  }
}

}  // namespace pai
