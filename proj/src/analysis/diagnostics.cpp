#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "pai/analysis.hpp"
#include "pai/saliency.hpp"

namespace pai {

std::vector<SaliencyVsTRow> saliency_vs_T(const PrunableModel& model, const Dataset& train, std::size_t k,
                                          const std::vector<std::size_t>& Ts, const std::string& method,
                                          std::size_t batch_size, std::size_t eval_batches, std::uint64_t seed) {
  if (std::find(Ts.begin(), Ts.end(), std::size_t{1}) == Ts.end()) {
    throw std::invalid_argument("saliency_vs_T: the T list must include 1");
  }
  if (method != "iter-snip" && method != "force" && method != "iter-grasp") {
    throw std::invalid_argument("saliency_vs_T: '" + method + "' is not an iterative method");
  }
  if (eval_batches < 1) throw std::invalid_argument("saliency_vs_T: eval_batches must be >= 1");
  BatchSampler eval_sampler(train, batch_size, seed ^ 0xE7A1B17C4ULL);
  const std::vector<Batch> eval = eval_sampler.take(eval_batches);

  std::vector<SaliencyVsTRow> rows;
  double base = 0.0;
  for (std::size_t T : Ts) {
    PrunerConfig cfg = method == "force"       ? PrunerConfig::force(T)
                       : method == "iter-snip" ? PrunerConfig::iter_snip(T)
                                               : PrunerConfig::iter_grasp(T);
    BatchSampler sampler(train, batch_size, seed);
    const PruneResult pr = prune(model, k, cfg, sampler);
    SaliencyVsTRow row;
    row.seed = seed;
    row.T = T;
    row.saliency = mask_saliency(model, pr.mask, Semantics::pruned, eval);
    if (T == 1) base = row.saliency;
    rows.push_back(row);
  }
  if (!(base > 0.0)) throw std::domain_error("saliency_vs_T: zero saliency at T = 1");
  for (auto& r : rows) r.ratio = r.T == 1 ? 1.0 : r.saliency / base;
  return rows;
}

void write_saliency_vs_T_csv(std::ostream& out, const std::vector<SaliencyVsTRow>& rows) {
  csv::write_row(out, {"seed", "T", "saliency", "ratio"});
  for (const auto& r : rows) {
    csv::write_row(out, {std::to_string(r.seed), csv::num(r.T), csv::num(r.saliency), csv::num(r.ratio)});
  }
}

std::size_t LayerDensityProfile::kept() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.kept;
  return n;
}

bool LayerDensityProfile::any_collapse() const {
  return std::any_of(layers.begin(), layers.end(), [](const LayerDensity& l) { return l.collapsed; });
}

LayerDensityProfile layer_density(const Mask& mask, std::span<const std::size_t> offsets) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != mask.size()) {
    throw std::invalid_argument("layer_density: layer offsets do not cover the mask");
  }
  LayerDensityProfile p;
  for (std::size_t l = 0; l + 1 < offsets.size(); ++l) {
    LayerDensity d;
    d.total = offsets[l + 1] - offsets[l];
    for (std::size_t i = offsets[l]; i < offsets[l + 1]; ++i) d.kept += mask[i] ? 1 : 0;
    d.fraction = d.total ? static_cast<double>(d.kept) / static_cast<double>(d.total) : 0.0;
    d.collapsed = d.kept == 0;
    p.layers.push_back(d);
  }
  return p;
}

std::vector<ConsistencyRow> consistency(const std::vector<LabeledProfile>& profiles) {
  struct Group {
    std::string method;
    double fraction;
    std::vector<const LayerDensityProfile*> members;
  };
  std::vector<Group> groups;
  for (const auto& p : profiles) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Group& g) { return g.method == p.method && g.fraction == p.kept_fraction; });
    if (it == groups.end()) {
      groups.push_back({p.method, p.kept_fraction, {}});
      it = groups.end() - 1;
    }
    if (!it->members.empty() && it->members.front()->layers.size() != p.profile.layers.size()) {
      throw std::invalid_argument("consistency: profiles disagree on the number of layers");
    }
    it->members.push_back(&p.profile);
  }
  std::vector<ConsistencyRow> rows;
  for (const auto& g : groups) {
    const std::size_t L = g.members.front()->layers.size();
    std::vector<ConsistencyRow> block(L);
    for (std::size_t l = 0; l < L; ++l) {
      std::vector<double> f;
      for (const auto* m : g.members) f.push_back(m->layers[l].fraction);
      block[l] = {g.method, g.fraction, l, f.size(), mean_of(f), sample_std(f), 0};
    }
    std::vector<std::size_t> order(L);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return block[a].mean_fraction > block[b].mean_fraction; });
    for (std::size_t r = 0; r < L; ++r) block[order[r]].rank = r;
    rows.insert(rows.end(), block.begin(), block.end());
  }
  return rows;
}

void write_consistency_csv(std::ostream& out, const std::vector<ConsistencyRow>& rows) {
  csv::write_row(out, {"method", "kept_fraction", "layer", "seeds", "mean_fraction", "std_fraction", "rank"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.method, csv::num(r.kept_fraction), csv::num(r.layer), csv::num(r.seeds),
                         csv::num(r.mean_fraction), csv::num(r.std_fraction), csv::num(r.rank)});
  }
}

void write_density_csv(std::ostream& out, const std::vector<LabeledProfile>& profiles) {
  csv::write_row(out, {"method", "kept_fraction", "seed", "layer", "kept", "total", "fraction", "collapsed"});
  for (const auto& p : profiles) {
    for (std::size_t l = 0; l < p.profile.layers.size(); ++l) {
      const auto& d = p.profile.layers[l];
      csv::write_row(out, {p.method, csv::num(p.kept_fraction), std::to_string(p.seed), csv::num(l), csv::num(d.kept),
                           csv::num(d.total), csv::num(d.fraction), d.collapsed ? "1" : "0"});
    }
  }
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: series lengths differ");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least two points");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: zero-variance series");
  return sxy / std::sqrt(sxx * syy);
}

CorrelationReport sparsified_vs_pruned_correlation(const PrunableModel& model, const std::vector<Mask>& masks,
                                                   std::span<const Batch> batches) {
  if (masks.size() < 3) throw std::invalid_argument("sparsified_vs_pruned_correlation: need at least 3 masks");
  CorrelationReport r;
  for (const Mask& m : masks) {
    r.pruned.push_back(mask_saliency(model, m, Semantics::pruned, batches));
    r.sparsified.push_back(mask_saliency(model, m, Semantics::sparsified, batches));
  }
  r.r = pearson(r.pruned, r.sparsified);
  return r;
}

}  // namespace pai
