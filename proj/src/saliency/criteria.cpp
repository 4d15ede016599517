#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include "pai/csv.hpp"
#include "pai/saliency.hpp"

namespace pai {

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::snip: return "snip";
    case Criterion::force: return "force";
    case Criterion::grasp: return "grasp";
    case Criterion::grad_norm: return "grad_norm";
    case Criterion::magnitude: return "magnitude";
    case Criterion::random: return "random";
  }
  return "?";
}

Criterion criterion_from_string(std::string_view s) {
  for (Criterion c : {Criterion::snip, Criterion::force, Criterion::grasp, Criterion::grad_norm, Criterion::magnitude,
                      Criterion::random}) {
    if (s == to_string(c)) return c;
  }
  throw std::invalid_argument("unknown criterion '" + std::string(s) + "'");
}

namespace {

void require_batches(const char* what, std::span<const Batch> batches) {
  if (batches.empty()) throw std::invalid_argument(std::string(what) + ": at least one batch is required");
}

void check_mask(const char* what, const PrunableModel& model, const Mask& mask) {
  if (mask.size() != model.num_weights()) {
    throw std::invalid_argument(std::string(what) + ": mask has " + std::to_string(mask.size()) + " entries, model has " +
                                std::to_string(model.num_weights()) + " weights");
  }
}

void check_finite(const char* what, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::domain_error(std::string(what) + ": non-finite score");
  }
}

// Batch-mean gradient at arbitrary effective weights; pruned semantics zero the
// entries outside the mask.
std::vector<double> mean_gradient_at(const PrunableModel& model, std::span<const double> effective, const Mask& mask,
                                     Semantics semantics, std::span<const Batch> batches) {
  std::vector<double> g(model.num_weights(), 0.0);
  for (const Batch& b : batches) {
    const LossGrad lg = model.loss_and_grad_at(effective, b);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += lg.grad[i];
  }
  const double inv = 1.0 / static_cast<double>(batches.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = (semantics == Semantics::pruned && !mask[i]) ? 0.0 : g[i] * inv;
  }
  return g;
}

}  // namespace

std::vector<double> mean_gradient(const PrunableModel& model, const Mask& mask, Semantics semantics,
                                  std::span<const Batch> batches) {
  require_batches("mean_gradient", batches);
  check_mask("mean_gradient", model, mask);
  const std::vector<double> effective = apply_mask(model.weights(), mask);
  return mean_gradient_at(model, effective, mask, semantics, batches);
}

SaliencyVector connection_sensitivity(const PrunableModel& model, const Mask& mask, Semantics semantics,
                                      std::span<const Batch> batches) {
  require_batches("connection_sensitivity", batches);
  const std::vector<double> g = mean_gradient(model, mask, semantics, batches);
  const auto theta = model.weights();
  SaliencyVector s;
  s.scores.resize(g.size());
  // Original theta, not theta*mask: removed weights are scored by what they would
  // contribute if restored.
  for (std::size_t i = 0; i < g.size(); ++i) s.scores[i] = std::abs(theta[i] * g[i]);
  check_finite("connection_sensitivity", s.scores);
  s.criterion = (semantics == Semantics::sparsified && mask_count(mask) != mask.size()) ? Criterion::force : Criterion::snip;
  s.batch_count = batches.size();
  s.mask = mask;
  return s;
}

SaliencyVector connection_sensitivity(const MaskedNetwork& net, std::span<const Batch> batches) {
  return connection_sensitivity(net.network, net.mask, net.semantics, batches);
}

SaliencyVector grasp_scores(const PrunableModel& model, const Mask& mask, Semantics semantics,
                            std::span<const Batch> batches, std::optional<double> hvp_step) {
  require_batches("grasp_scores", batches);
  check_mask("grasp_scores", model, mask);
  const std::vector<double> effective = apply_mask(model.weights(), mask);
  const std::vector<double> g = mean_gradient_at(model, effective, mask, semantics, batches);
  const GradientFn grad = [&](std::span<const double> w) { return mean_gradient_at(model, w, mask, semantics, batches); };
  const double h = hvp_step.value_or(default_hvp_step(effective));
  const std::vector<double> hg = hessian_vector_product(grad, effective, g, h);
  const auto theta = model.weights();
  SaliencyVector s;
  s.scores.resize(g.size());
  // Keep rule: removed set minimizes sum theta_i [Hg]_i, so keep the largest scores.
  for (std::size_t i = 0; i < g.size(); ++i) s.scores[i] = theta[i] * hg[i];
  check_finite("grasp_scores", s.scores);
  s.criterion = Criterion::grasp;
  s.batch_count = batches.size();
  s.mask = mask;
  return s;
}

SaliencyVector grasp_scores(const MaskedNetwork& net, std::span<const Batch> batches, std::optional<double> hvp_step) {
  return grasp_scores(net.network, net.mask, net.semantics, batches, hvp_step);
}

SaliencyVector grad_norm_scores(const PrunableModel& model, const Mask& mask, std::span<const Batch> batches) {
  require_batches("grad_norm_scores", batches);
  const std::vector<double> g = mean_gradient(model, mask, Semantics::pruned, batches);
  SaliencyVector s;
  s.scores.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) s.scores[i] = g[i] * g[i];
  check_finite("grad_norm_scores", s.scores);
  s.criterion = Criterion::grad_norm;
  s.batch_count = batches.size();
  s.mask = mask;
  return s;
}

SaliencyVector magnitude_scores(std::span<const double> theta) {
  SaliencyVector s;
  s.scores.reserve(theta.size());
  for (double v : theta) s.scores.push_back(std::abs(v));
  s.criterion = Criterion::magnitude;
  s.mask = full_mask(theta.size());
  return s;
}

SaliencyVector random_scores(std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SaliencyVector s;
  s.scores.resize(m);
  for (double& v : s.scores) v = unit(rng);
  s.criterion = Criterion::random;
  s.mask = full_mask(m);
  return s;
}

double mask_saliency(const PrunableModel& model, const Mask& mask, Semantics semantics, std::span<const Batch> batches) {
  require_batches("mask_saliency", batches);
  const std::vector<double> g = mean_gradient(model, mask, semantics, batches);
  const auto theta = model.weights();
  // Pruned semantics already zero every term outside supp(c); sparsified
  // semantics keep the gradient of zeroed connections and score them with theta.
  double total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) total += std::abs(theta[i] * g[i]);
  return total;
}

void write_saliency_csv(std::ostream& out, const SaliencyVector& s, std::span<const std::size_t> layer_offsets) {
  if (layer_offsets.empty() || layer_offsets.back() != s.size()) {
    throw std::invalid_argument("write_saliency_csv: layer offsets do not cover the score vector");
  }
  csv::write_row(out, {"flat_index", "layer", "score"});
  std::size_t layer = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    while (layer + 1 < layer_offsets.size() && i >= layer_offsets[layer + 1]) ++layer;
    csv::write_row(out, {csv::num(i), csv::num(layer), csv::num(s.scores[i])});
  }
}

}  // namespace pai
