#pragma once

// Per-weight scoring rules. Every criterion produces a SaliencyVector whose
// top-k entries are kept by the pruning engine.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pai/nn.hpp"

namespace pai {

enum class Criterion { snip, force, grasp, grad_norm, magnitude, random };

std::string_view to_string(Criterion c);
Criterion criterion_from_string(std::string_view s);

struct SaliencyVector {
  std::vector<double> scores;
  Criterion criterion = Criterion::snip;
  std::size_t batch_count = 0;
  Mask mask;  // mask at which the scores were computed

  std::size_t size() const { return scores.size(); }
};

// Mean over batches of the gradient w.r.t. theta*mask under `semantics`.
std::vector<double> mean_gradient(const PrunableModel& model, const Mask& mask, Semantics semantics,
                                  std::span<const Batch> batches);

// |theta_i * gbar_i| with gbar the batch-mean gradient at theta*mask. Signed
// gradients are averaged before the absolute value. With an all-ones mask this
// is SNIP; at a sparsified mask it is the FORCE score; at a pruned mask it is
// the Iterative SNIP score (zero outside the support).
SaliencyVector connection_sensitivity(const PrunableModel& model, const Mask& mask, Semantics semantics,
                                      std::span<const Batch> batches);
SaliencyVector connection_sensitivity(const MaskedNetwork& net, std::span<const Batch> batches);

// theta_i * [H gbar]_i. GRASP maximizes the sum of -theta_i [H g]_i over the
// removed weights, so the removed set holds the smallest scores and the kept set
// is the top-k of these scores. `hvp_step` defaults to 1e-4 * (1 + |theta*mask|_inf).
SaliencyVector grasp_scores(const PrunableModel& model, const Mask& mask, Semantics semantics,
                            std::span<const Batch> batches, std::optional<double> hvp_step = std::nullopt);
SaliencyVector grasp_scores(const MaskedNetwork& net, std::span<const Batch> batches,
                            std::optional<double> hvp_step = std::nullopt);

// gbar_i^2 under pruned semantics (zero outside the support).
SaliencyVector grad_norm_scores(const PrunableModel& model, const Mask& mask, std::span<const Batch> batches);

SaliencyVector magnitude_scores(std::span<const double> theta);
// i.i.d. uniform(0,1): the top-k of these is a uniformly random mask.
SaliencyVector random_scores(std::size_t m, std::uint64_t seed);

// S(theta, c) = sum_i |theta_i * gbar_i| with gbar the batch-mean gradient at
// theta*c under `semantics`. Pruned semantics restrict the sum to supp(c).
double mask_saliency(const PrunableModel& model, const Mask& mask, Semantics semantics, std::span<const Batch> batches);

// CSV with header flat_index,layer,score.
void write_saliency_csv(std::ostream& out, const SaliencyVector& s, std::span<const std::size_t> layer_offsets);

}  // namespace pai
