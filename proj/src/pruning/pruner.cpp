#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "pai/csv.hpp"
#include "pai/pruning.hpp"

namespace pai {

SparsitySchedule exp_schedule(std::size_t m, std::size_t k, std::size_t T) {
  if (k < 1 || k > m) {
    throw std::invalid_argument("exp_schedule: need 1 <= k <= m (k=" + std::to_string(k) + ", m=" + std::to_string(m) + ")");
  }
  if (T < 1) throw std::invalid_argument("exp_schedule: T must be >= 1");
  SparsitySchedule s{m, k, T, {}};
  s.kept.resize(T + 1);
  const double lk = std::log(static_cast<double>(k));
  const double lm = std::log(static_cast<double>(m));
  s.kept[0] = m;
  for (std::size_t t = 1; t < T; ++t) {
    const double a = static_cast<double>(t) / static_cast<double>(T);
    const auto raw = static_cast<std::size_t>(std::llround(std::exp(a * lk + (1.0 - a) * lm)));
    s.kept[t] = std::min(s.kept[t - 1], std::max(k, raw));
  }
  s.kept[T] = k;
  return s;
}

Mask top_k_mask(std::span<const double> scores, std::size_t k, const Mask* candidates) {
  if (candidates && candidates->size() != scores.size()) {
    throw std::invalid_argument("top_k_mask: candidate mask length differs from the score vector");
  }
  std::vector<std::size_t> pool;
  pool.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!candidates || (*candidates)[i]) pool.push_back(i);
  }
  if (pool.size() < k) {
    throw std::invalid_argument("top_k_mask: " + std::to_string(pool.size()) + " candidates for k=" + std::to_string(k));
  }
  for (std::size_t i : pool) {
    if (std::isnan(scores[i])) throw std::domain_error("top_k_mask: NaN score at index " + std::to_string(i));
  }
  const auto before = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end(), before);
  Mask mask(scores.size(), 0);
  for (std::size_t j = 0; j < k; ++j) mask[pool[j]] = 1;
  return mask;
}

std::string_view to_string(PruneMode m) { return m == PruneMode::one_shot ? "one_shot" : "iterative"; }

PruneMode prune_mode_from_string(std::string_view s) {
  if (s == "one_shot") return PruneMode::one_shot;
  if (s == "iterative") return PruneMode::iterative;
  throw std::invalid_argument("unknown prune mode '" + std::string(s) + "'");
}

PrunerConfig PrunerConfig::force(std::size_t T, std::size_t B) {
  return {Criterion::force, PruneMode::iterative, Semantics::sparsified, T, B, 0};
}
PrunerConfig PrunerConfig::iter_snip(std::size_t T, std::size_t B) {
  return {Criterion::snip, PruneMode::iterative, Semantics::pruned, T, B, 0};
}
PrunerConfig PrunerConfig::iter_grasp(std::size_t T, std::size_t B) {
  return {Criterion::grad_norm, PruneMode::iterative, Semantics::pruned, T, B, 0};
}
PrunerConfig PrunerConfig::snip(std::size_t B) { return {Criterion::snip, PruneMode::one_shot, Semantics::pruned, 1, B, 0}; }
PrunerConfig PrunerConfig::grasp(std::size_t B) {
  return {Criterion::grasp, PruneMode::one_shot, Semantics::pruned, 1, B, 0};
}
PrunerConfig PrunerConfig::magnitude() { return {Criterion::magnitude, PruneMode::one_shot, Semantics::pruned, 1, 0, 0}; }
PrunerConfig PrunerConfig::random(std::uint64_t seed) {
  return {Criterion::random, PruneMode::one_shot, Semantics::pruned, 1, 0, seed};
}

void PrunerConfig::validate() const {
  const auto fail = [](const std::string& why) { throw std::invalid_argument("PrunerConfig: " + why); };
  if (iterations < 1) fail("T must be >= 1");
  const bool data_free = criterion == Criterion::magnitude || criterion == Criterion::random;
  if (!data_free && batches_per_iteration < 1) fail("at least one batch per iteration is required");
  if (data_free && mode != PruneMode::one_shot) fail(std::string(to_string(criterion)) + " is one-shot only");
  if (criterion == Criterion::force && (mode != PruneMode::iterative || semantics != Semantics::sparsified)) {
    fail("force requires iterative mode with sparsified semantics");
  }
  if (semantics == Semantics::sparsified && criterion != Criterion::force && criterion != Criterion::snip) {
    fail("sparsified semantics are only defined for connection sensitivity");
  }
  if (criterion == Criterion::grad_norm && semantics != Semantics::pruned) fail("grad_norm requires pruned semantics");
}

namespace {

SaliencyVector score(const PrunableModel& model, const Mask& mask, const PrunerConfig& cfg,
                     std::span<const Batch> batches) {
  switch (cfg.criterion) {
    case Criterion::snip:
    case Criterion::force: return connection_sensitivity(model, mask, cfg.semantics, batches);
    case Criterion::grasp: return grasp_scores(model, mask, cfg.semantics, batches);
    case Criterion::grad_norm: return grad_norm_scores(model, mask, batches);
    case Criterion::magnitude: return magnitude_scores(model.weights());
    case Criterion::random: return random_scores(model.num_weights(), cfg.seed);
  }
  throw std::logic_error("prune: unhandled criterion");
}

}  // namespace

PruneResult prune(const PrunableModel& model, std::size_t k, const PrunerConfig& cfg, BatchSampler& sampler) {
  cfg.validate();
  const std::size_t m = model.num_weights();
  const std::size_t T = cfg.steps();
  const SparsitySchedule sched = exp_schedule(m, k, T);
  const bool data_free = cfg.criterion == Criterion::magnitude || cfg.criterion == Criterion::random;

  PruneResult result;
  Mask current = full_mask(m);
  result.trace.masks.push_back(current);
  for (std::size_t t = 0; t < T; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<Batch> batches = data_free ? std::vector<Batch>{} : sampler.take(cfg.batches_per_iteration);
    const SaliencyVector s = score(model, current, cfg, batches);
    // Sparsified semantics let any weight come back; pruned semantics nest.
    const Mask* candidates = cfg.semantics == Semantics::sparsified ? nullptr : &current;
    Mask next = top_k_mask(s.scores, sched.kept[t + 1], candidates);

    PruneStep step;
    step.t = t;
    step.kept = sched.kept[t + 1];
    for (std::size_t i = 0; i < m; ++i) {
      if (current[i] && !next[i]) ++step.pruned;
      if (!current[i] && next[i]) ++step.recovered;
    }
    if (!batches.empty()) step.saliency = mask_saliency(model, next, Semantics::pruned, batches);
    step.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.trace.steps.push_back(step);
    result.trace.masks.push_back(next);
    current = std::move(next);
  }
  result.mask = std::move(current);
  return result;
}

EarlyPruneResult early_prune(const MaskedNetwork& net, const DatasetSplits& data, std::size_t k, std::size_t epochs,
                             const TrainConfig& optimizer) {
  MaskedNetwork copy = net;
  copy.set_mask(full_mask(net.num_weights()));
  if (epochs > 0) {
    TrainConfig cfg = optimizer;
    cfg.epochs = epochs;
    cfg.lr_drop_epochs.clear();
    cfg.lr_drop_factor = 1.0;
    const TrainReport rep = train(copy, data, cfg);
    if (rep.diverged) throw std::runtime_error("early_prune: training diverged");
  }
  EarlyPruneResult r;
  const SaliencyVector mag = magnitude_scores(copy.network.weights());
  r.mask = top_k_mask(mag.scores, k);
  r.trained_weights.assign(copy.network.weights().begin(), copy.network.weights().end());
  r.trained_biases = copy.network.biases();
  return r;
}

void save_mask_file(const MaskFile& f, const std::filesystem::path& path) {
  if (f.mask.size() != f.m) throw std::invalid_argument("save_mask_file: mask length differs from m");
  nlohmann::json j;
  j["format"] = "pai-mask";
  j["version"] = 1;
  j["m"] = f.m;
  j["k"] = f.k;
  j["criterion"] = f.criterion;
  j["semantics"] = std::string(to_string(f.semantics));
  j["T"] = f.T;
  j["seed"] = f.seed;
  j["mask"] = mask_to_hex(f.mask);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

MaskFile load_mask_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "pai-mask") throw std::runtime_error(path.string() + ": not a mask file");
  if (j.value("version", 0) != 1) throw std::runtime_error(path.string() + ": unsupported mask file version");
  MaskFile f;
  f.m = j.at("m").get<std::size_t>();
  f.k = j.at("k").get<std::size_t>();
  f.criterion = j.at("criterion").get<std::string>();
  f.semantics = semantics_from_string(j.at("semantics").get<std::string>());
  f.T = j.at("T").get<std::size_t>();
  f.seed = j.at("seed").get<std::uint64_t>();
  f.mask = mask_from_hex(j.at("mask").get<std::string>(), f.m);
  if (mask_count(f.mask) != f.k) throw std::runtime_error(path.string() + ": mask cardinality differs from k");
  return f;
}

void write_trace_csv(std::ostream& out, const PruneTrace& trace) {
  csv::write_row(out, {"t", "k_t", "pruned", "recovered", "saliency", "seconds"});
  for (const PruneStep& s : trace.steps) {
    csv::write_row(out, {csv::num(s.t), csv::num(s.kept), csv::num(s.pruned), csv::num(s.recovered),
                         csv::num(s.saliency), csv::num(s.seconds)});
  }
}

}  // namespace pai
