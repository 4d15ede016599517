#pragma once

// Sparsity schedules and the progressive pruning loop (FORCE, Iterative SNIP,
// Iterative GRASP and their one-shot counterparts).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pai/data.hpp"
#include "pai/nn.hpp"
#include "pai/saliency.hpp"
#include "pai/training.hpp"

namespace pai {

struct SparsitySchedule {
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t T = 0;
  std::vector<std::size_t> kept;  // k_0 .. k_T
};

// k_t = round(exp(a ln k + (1 - a) ln m)), a = t/T, clamped non-increasing with
// exact endpoints. Repeated values are allowed.
SparsitySchedule exp_schedule(std::size_t m, std::size_t k, std::size_t T);

// Keeps the k candidates with the largest scores; ties go to the lower index.
// `candidates` null means every index. Throws if fewer than k candidates.
Mask top_k_mask(std::span<const double> scores, std::size_t k, const Mask* candidates = nullptr);

enum class PruneMode { one_shot, iterative };

std::string_view to_string(PruneMode m);
PruneMode prune_mode_from_string(std::string_view s);

struct PrunerConfig {
  Criterion criterion = Criterion::snip;
  PruneMode mode = PruneMode::one_shot;
  Semantics semantics = Semantics::pruned;
  std::size_t iterations = 1;             // T; forced to 1 for one_shot
  std::size_t batches_per_iteration = 1;  // B
  std::uint64_t seed = 0;                 // used by the random criterion

  static PrunerConfig force(std::size_t T, std::size_t B = 1);
  static PrunerConfig iter_snip(std::size_t T, std::size_t B = 1);
  static PrunerConfig iter_grasp(std::size_t T, std::size_t B = 1);
  static PrunerConfig snip(std::size_t B = 1);
  static PrunerConfig grasp(std::size_t B = 1);
  static PrunerConfig magnitude();
  static PrunerConfig random(std::uint64_t seed);

  // Rejects inconsistent combinations, e.g. sparsified semantics with a
  // criterion other than connection sensitivity.
  void validate() const;
  std::size_t steps() const { return mode == PruneMode::one_shot ? 1 : iterations; }
};

struct PruneStep {
  std::size_t t = 0;
  std::size_t kept = 0;       // k_{t+1}
  std::size_t pruned = 0;     // |supp(c_t) \ supp(c_{t+1})|
  std::size_t recovered = 0;  // |supp(c_{t+1}) \ supp(c_t)|
  double saliency = 0.0;      // S(theta, c_{t+1}) under pruned semantics
  double seconds = 0.0;
};

struct PruneTrace {
  std::vector<PruneStep> steps;
  std::vector<Mask> masks;  // c_0 .. c_T
};

struct PruneResult {
  Mask mask;
  PruneTrace trace;
};

// Runs the pruning loop on `model` (always scored at its stored theta) drawing
// B fresh batches per iteration from `sampler`.
PruneResult prune(const PrunableModel& model, std::size_t k, const PrunerConfig& cfg, BatchSampler& sampler);

struct EarlyPruneResult {
  Mask mask;
  std::vector<double> trained_weights;
  std::vector<std::vector<double>> trained_biases;
};

// Trains a dense copy for `epochs` epochs, then keeps the top-k of the trained
// |theta|. The mask is meant for the original initialization; the trained
// parameters are returned for the keep-trained variant.
EarlyPruneResult early_prune(const MaskedNetwork& net, const DatasetSplits& data, std::size_t k, std::size_t epochs,
                             const TrainConfig& optimizer);

struct MaskFile {
  std::size_t m = 0;
  std::size_t k = 0;
  std::string criterion;
  Semantics semantics = Semantics::pruned;
  std::size_t T = 1;
  std::uint64_t seed = 0;
  Mask mask;
};

void save_mask_file(const MaskFile& f, const std::filesystem::path& path);
MaskFile load_mask_file(const std::filesystem::path& path);

void write_trace_csv(std::ostream& out, const PruneTrace& trace);

}  // namespace pai
