#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <thread>

#include "pai/analysis.hpp"

namespace pai {

using nlohmann::json;

DatasetSplits make_splits(const TaskSpec& task) {
  Dataset data;
  if (task.kind == "spirals") {
    data = gen_spirals(task.classes, task.count, task.noise, task.seed);
  } else if (task.kind == "blobs") {
    data = gen_blobs(task.classes, task.count, task.dim, task.spread, task.seed);
  } else if (task.kind == "idx") {
    data = load_idx(task.images, task.labels);
  } else {
    throw std::invalid_argument("unknown task kind '" + task.kind + "'");
  }
  DatasetSplits s = split_dataset(data, task.test_fraction, task.val_fraction, task.seed);
  if (task.normalize || task.kind == "idx") {
    const Normalization n = fit_normalization(s.train);
    apply_normalization(s.train, n);
    apply_normalization(s.val, n);
    apply_normalization(s.test, n);
  }
  return s;
}

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> names = {"dense",     "random",     "magnitude",   "snip",
                                                 "snip-mb",   "grasp",      "grasp-mb",    "force",
                                                 "iter-snip", "iter-grasp", "early-prune", "early-prune-trained"};
  return names;
}

bool is_known_method(const std::string& name) {
  const auto& n = known_methods();
  return std::find(n.begin(), n.end(), name) != n.end();
}

void ExperimentConfig::validate() const {
  arch.validate();
  if (methods.empty()) throw std::invalid_argument("experiment: no methods");
  for (const auto& m : methods) {
    if (!is_known_method(m)) throw std::invalid_argument("experiment: unknown method '" + m + "'");
  }
  if (seeds.empty()) throw std::invalid_argument("experiment: at least one seed is required");
  const bool all_dense = std::all_of(methods.begin(), methods.end(), [](const std::string& m) { return m == "dense"; });
  if (kept_fractions.empty() && !all_dense) throw std::invalid_argument("experiment: no kept fractions");
  for (double f : kept_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("experiment: kept fraction " + csv::num(f) + " not in (0,1]");
  }
  if (iterations < 1 || batches_per_iteration < 1) throw std::invalid_argument("experiment: T and B must be >= 1");
  if (jobs < 1) throw std::invalid_argument("experiment: jobs must be >= 1");
  train.validate();
}

std::size_t ExperimentConfig::batch_size_for_saliency() const {
  return saliency_batch_size ? saliency_batch_size : default_saliency_batch_size(arch.num_classes());
}

namespace {

const std::set<std::string> kExperimentKeys = {"task",          "arch",         "kept_fractions",
                                               "methods",       "seeds",        "iterations",
                                               "batches_per_iteration",         "saliency_batch_size",
                                               "early_prune_epochs",            "train",
                                               "out_dir",       "jobs"};
const std::set<std::string> kTaskKeys = {"kind", "classes", "count", "noise", "dim", "spread", "images",
                                         "labels", "normalize", "test_fraction", "val_fraction", "seed"};
const std::set<std::string> kTrainKeys = {"epochs",         "batch_size",     "learning_rate", "momentum",
                                          "weight_decay",   "lr_drop_epochs", "lr_drop_factor"};

void reject_unknown(const json& j, const std::set<std::string>& allowed, const char* where) {
  if (!j.is_object()) throw std::invalid_argument(std::string(where) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw std::invalid_argument(std::string(where) + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig experiment_from_json(const json& j) {
  reject_unknown(j, kExperimentKeys, "experiment");
  ExperimentConfig c;
  try {
    if (j.contains("task")) {
      const json& t = j.at("task");
      reject_unknown(t, kTaskKeys, "task");
      read(t, "kind", c.task.kind);
      read(t, "classes", c.task.classes);
      read(t, "count", c.task.count);
      read(t, "noise", c.task.noise);
      read(t, "dim", c.task.dim);
      read(t, "spread", c.task.spread);
      read(t, "images", c.task.images);
      read(t, "labels", c.task.labels);
      read(t, "normalize", c.task.normalize);
      read(t, "test_fraction", c.task.test_fraction);
      read(t, "val_fraction", c.task.val_fraction);
      read(t, "seed", c.task.seed);
    }
    c.arch = architecture_from_json(j.at("arch"));
    read(j, "kept_fractions", c.kept_fractions);
    read(j, "methods", c.methods);
    read(j, "seeds", c.seeds);
    read(j, "iterations", c.iterations);
    read(j, "batches_per_iteration", c.batches_per_iteration);
    read(j, "saliency_batch_size", c.saliency_batch_size);
    read(j, "early_prune_epochs", c.early_prune_epochs);
    read(j, "out_dir", c.out_dir);
    read(j, "jobs", c.jobs);
    if (j.contains("train")) {
      const json& t = j.at("train");
      reject_unknown(t, kTrainKeys, "train");
      read(t, "epochs", c.train.epochs);
      read(t, "batch_size", c.train.batch_size);
      read(t, "learning_rate", c.train.learning_rate);
      read(t, "momentum", c.train.momentum);
      read(t, "weight_decay", c.train.weight_decay);
      read(t, "lr_drop_epochs", c.train.lr_drop_epochs);
      read(t, "lr_drop_factor", c.train.lr_drop_factor);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["task"] = {{"kind", c.task.kind},
               {"classes", c.task.classes},
               {"count", c.task.count},
               {"noise", c.task.noise},
               {"dim", c.task.dim},
               {"spread", c.task.spread},
               {"images", c.task.images},
               {"labels", c.task.labels},
               {"normalize", c.task.normalize},
               {"test_fraction", c.task.test_fraction},
               {"val_fraction", c.task.val_fraction},
               {"seed", c.task.seed}};
  j["arch"] = to_json(c.arch);
  j["kept_fractions"] = c.kept_fractions;
  j["methods"] = c.methods;
  j["seeds"] = c.seeds;
  j["iterations"] = c.iterations;
  j["batches_per_iteration"] = c.batches_per_iteration;
  j["saliency_batch_size"] = c.saliency_batch_size;
  j["early_prune_epochs"] = c.early_prune_epochs;
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"momentum", c.train.momentum},
                {"weight_decay", c.train.weight_decay},
                {"lr_drop_epochs", c.train.lr_drop_epochs},
                {"lr_drop_factor", c.train.lr_drop_factor}};
  j["out_dir"] = c.out_dir;
  j["jobs"] = c.jobs;
  return j;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

PrunerConfig pruner_for(const std::string& method, const ExperimentConfig& cfg, std::uint64_t seed) {
  const std::size_t T = cfg.iterations;
  const std::size_t B = cfg.batches_per_iteration;
  if (method == "random") return PrunerConfig::random(seed);
  if (method == "magnitude") return PrunerConfig::magnitude();
  if (method == "snip") return PrunerConfig::snip(B);
  if (method == "snip-mb") return PrunerConfig::snip(T * B);
  if (method == "grasp") return PrunerConfig::grasp(B);
  if (method == "grasp-mb") return PrunerConfig::grasp(T * B);
  if (method == "force") return PrunerConfig::force(T, B);
  if (method == "iter-snip") return PrunerConfig::iter_snip(T, B);
  if (method == "iter-grasp") return PrunerConfig::iter_grasp(T, B);
  throw std::invalid_argument("no pruner for method '" + method + "'");
}

std::size_t kept_count(double kept_fraction, std::size_t m) {
  const auto k = static_cast<long long>(std::llround(kept_fraction * static_cast<double>(m)));
  return static_cast<std::size_t>(std::clamp<long long>(k, 1, static_cast<long long>(m)));
}

double CellResult::sparsity_percent() const {
  if (m == 0) return 100.0 * (1.0 - kept_fraction);
  return 100.0 * static_cast<double>(m - kept) / static_cast<double>(m);
}

namespace {

// Keeps the batch stream of a cell apart from its init and training streams.
std::uint64_t saliency_stream(std::uint64_t seed) { return seed * 0x9E3779B97F4A7C15ULL + 0x5A11E7CEULL; }

}  // namespace

MaskedNetwork prune_cell(const ExperimentConfig& cfg, const DatasetSplits& data, const std::string& method,
                         double kept_fraction, std::uint64_t seed, PruneTrace* trace) {
  if (!is_known_method(method)) throw std::invalid_argument("unknown method '" + method + "'");
  MaskedNetwork net = build_network(cfg.arch, seed);
  const std::size_t m = net.num_weights();
  const std::size_t k = method == "dense" ? m : kept_count(kept_fraction, m);
  Mask mask;
  if (method == "dense") {
    mask = full_mask(m);
  } else if (method == "early-prune" || method == "early-prune-trained") {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    EarlyPruneResult ep = early_prune(net, data, k, cfg.early_prune_epochs, tc);
    mask = std::move(ep.mask);
    if (method == "early-prune-trained") {
      std::copy(ep.trained_weights.begin(), ep.trained_weights.end(), net.network.mutable_weights().begin());
      net.network.mutable_biases() = std::move(ep.trained_biases);
    }
  } else {
    BatchSampler sampler(data.train, std::min(cfg.batch_size_for_saliency(), data.train.size()),
                         saliency_stream(seed));
    PruneResult pr = prune(net.network, k, pruner_for(method, cfg, seed), sampler);
    mask = std::move(pr.mask);
    if (trace) *trace = std::move(pr.trace);
  }
  net.set_mask(std::move(mask));
  net.semantics = Semantics::pruned;
  return net;
}

CellResult run_cell(const ExperimentConfig& cfg, const DatasetSplits& data, const std::string& method,
                    double kept_fraction, std::uint64_t seed) {
  CellResult r;
  r.method = method;
  r.kept_fraction = method == "dense" ? 1.0 : kept_fraction;
  r.seed = seed;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    MaskedNetwork net = prune_cell(cfg, data, method, kept_fraction, seed, &r.trace);
    const auto t1 = std::chrono::steady_clock::now();
    r.prune_seconds = std::chrono::duration<double>(t1 - t0).count();
    r.m = net.num_weights();
    r.mask = net.mask;
    r.kept = mask_count(r.mask);
    r.collapse = layer_density(r.mask, net.network.layer_offsets()).any_collapse();

    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const TrainReport rep = train(net, data, tc);
    r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    if (rep.diverged) throw std::runtime_error("training diverged");
    if (rep.max_pruned_magnitude != 0.0) throw std::logic_error("pruned weight moved during training");
    r.test_accuracy = rep.test_accuracy;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

std::vector<CellResult> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const DatasetSplits data = make_splits(cfg.task);
  struct Key {
    std::string method;
    double fraction;
    std::uint64_t seed;
  };
  std::vector<Key> keys;
  for (const auto& method : cfg.methods) {
    const std::vector<double> fractions = method == "dense" ? std::vector<double>{1.0} : cfg.kept_fractions;
    for (double f : fractions) {
      for (std::uint64_t s : cfg.seeds) keys.push_back({method, f, s});
    }
  }
  std::vector<CellResult> out(keys.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < keys.size(); i = next++) {
      out[i] = run_cell(cfg, data, keys[i].method, keys[i].fraction, keys[i].seed);
    }
  };
  const std::size_t jobs = std::min(cfg.jobs, std::max<std::size_t>(1, keys.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<Aggregate> aggregate(const std::vector<CellResult>& cells) {
  std::vector<Aggregate> out;
  std::vector<std::vector<double>> values;
  for (const auto& c : cells) {
    if (!c.ok()) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const Aggregate& a) {
      return a.method == c.method && a.kept_fraction == c.kept_fraction;
    });
    if (it == out.end()) {
      out.push_back({c.method, c.kept_fraction, 0, 0.0, 0.0, c.sparsity_percent()});
      values.emplace_back();
      it = out.end() - 1;
    }
    values[static_cast<std::size_t>(it - out.begin())].push_back(c.test_accuracy);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].n = values[i].size();
    out[i].mean = mean_of(values[i]);
    out[i].stddev = sample_std(values[i]);
  }
  return out;
}

namespace {

std::string status_field(const CellResult& c) {
  if (c.ok()) return "ok";
  std::string s = "error: " + c.error;
  for (char& ch : s) {
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  }
  return s;
}

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<CellResult>& cells) {
  csv::write_row(out, {"kind", "method", "sparsity", "kept_fraction", "seed", "test_acc", "collapse", "status"});
  for (const auto& c : cells) {
    csv::write_row(out, {"run", c.method, csv::num(c.sparsity_percent()), csv::num(c.kept_fraction),
                         std::to_string(c.seed), csv::num(c.test_accuracy), c.collapse ? "1" : "0", status_field(c)});
  }
  for (const auto& a : aggregate(cells)) {
    csv::write_row(out, {"mean", a.method, csv::num(a.sparsity), csv::num(a.kept_fraction), csv::num(a.n),
                         csv::num(a.mean), "", "ok"});
    csv::write_row(out, {"std", a.method, csv::num(a.sparsity), csv::num(a.kept_fraction), csv::num(a.n),
                         csv::num(a.stddev), "", "ok"});
  }
}

void write_timings_csv(std::ostream& out, const std::vector<CellResult>& cells) {
  csv::write_row(out, {"method", "kept_fraction", "seed", "prune_seconds", "train_seconds"});
  for (const auto& c : cells) {
    csv::write_row(out, {c.method, csv::num(c.kept_fraction), std::to_string(c.seed), csv::num(c.prune_seconds),
                         csv::num(c.train_seconds)});
  }
}

void write_experiment_outputs(const ExperimentConfig& cfg, const std::vector<CellResult>& cells) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir / "traces");
  fs::create_directories(dir / "masks");
  const auto open = [](const fs::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
  };
  {
    auto f = open(dir / "results.csv");
    write_results_csv(f, cells);
  }
  {
    auto f = open(dir / "timings.csv");
    write_timings_csv(f, cells);
  }
  {
    json manifest = {{"schema", kResultsSchema}, {"config", to_json(cfg)}};
    auto f = open(dir / "manifest.json");
    f << manifest.dump(1) << '\n';
  }
  for (const auto& c : cells) {
    if (!c.ok()) continue;
    const std::string stem = c.method + "_k" + csv::num(c.kept_fraction) + "_s" + std::to_string(c.seed);
    if (!c.trace.steps.empty()) {
      auto f = open(dir / "traces" / (stem + ".csv"));
      write_trace_csv(f, c.trace);
    }
    MaskFile mf;
    mf.m = c.m;
    mf.k = c.kept;
    mf.criterion = c.method;
    mf.semantics = Semantics::pruned;
    mf.T = c.trace.steps.empty() ? 1 : c.trace.steps.size();
    mf.seed = c.seed;
    mf.mask = c.mask;
    save_mask_file(mf, dir / "masks" / (stem + ".json"));
  }
}

}  // namespace pai
