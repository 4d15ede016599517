#pragma once

// Ground-truth checks: finite differences, exhaustive mask enumeration and the
// (p, eps)-local optimality measurement.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "pai/nn.hpp"

namespace pai {

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences, one coordinate at a time. Throws std::domain_error on a
// non-finite loss and std::invalid_argument if h <= 0.
std::vector<double> fd_gradient(const ScalarFn& f, std::span<const double> theta, double h);

// Row-major n x n Hessian from loss values only (four-point stencil).
std::vector<double> fd_hessian(const ScalarFn& f, std::span<const double> theta, double h);

// Binomial coefficient, saturating at SIZE_MAX.
std::size_t choose(std::size_t n, std::size_t k);

inline constexpr std::size_t kBruteForceLimit = 200000;
inline constexpr std::size_t kSwapLimit = 100000;

struct BruteForceResult {
  Mask mask;
  double saliency = 0.0;
  std::size_t evaluated = 0;
};

// Evaluates S(theta, c) under pruned semantics for every mask with k ones on the
// same batches. Ties keep the first mask in lexicographic order of the sorted
// kept-index tuple. Throws std::length_error beyond kBruteForceLimit masks.
BruteForceResult brute_force_best_mask(const PrunableModel& model, std::size_t k, std::span<const Batch> batches,
                                       std::size_t jobs = 1);

struct SwapSampling {
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
};

struct LocalOptReport {
  std::size_t p = 0;
  double base_saliency = 0.0;
  // max over swaps of S(zeta) - S(c_next); 0 when p = 0.
  double worst_slack = 0.0;
  std::size_t swaps = 0;
  bool sampled = false;
};

// Swaps p kept indices of c_next for p indices of supp(c_t) \ supp(c_next).
// Requires supp(c_next) inside supp(c_t). Exhaustive unless `sampling` is set;
// exhaustive runs beyond kSwapLimit throw std::length_error.
LocalOptReport local_optimality(const PrunableModel& model, const Mask& c_t, const Mask& c_next, std::size_t p,
                                std::span<const Batch> batches, std::optional<SwapSampling> sampling = std::nullopt);

void write_local_opt_csv(std::ostream& out, const std::vector<LocalOptReport>& reports);

}  // namespace pai
