#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pai/analysis.hpp"
#include "pai/csv.hpp"
#include "pai/oracle.hpp"
#include "pai/pruning.hpp"
#include "pai/saliency.hpp"
#include "pai/training.hpp"

namespace fs = std::filesystem;
using namespace pai;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::size_t jobs = 0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "run a single seed instead of the configured list");
  sub->add_option("--out-dir", c.out_dir, "output directory (overrides the config)");
  sub->add_option("--jobs", c.jobs, "worker threads (overrides the config)");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_experiment(c.config);
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
  if (c.jobs) cfg.jobs = c.jobs;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

// Pruning and scoring share one fixed batch so the optimum is well defined.
Dataset fixed_batch(const Dataset& train, std::size_t b, std::uint64_t seed) {
  BatchSampler pick(train, b, seed);
  return train.subset(pick.next_indices());
}

std::string cell_stem(const std::string& method, double fraction, std::uint64_t seed) {
  return method + "_k" + csv::num(fraction) + "_s" + std::to_string(seed);
}

int cmd_prune(const Common& c, const std::string& method, double fraction) {
  const ExperimentConfig cfg = load(c);
  const DatasetSplits data = make_splits(cfg.task);
  const fs::path dir(cfg.out_dir);
  for (std::uint64_t seed : cfg.seeds) {
    PruneTrace trace;
    const MaskedNetwork net = prune_cell(cfg, data, method, fraction, seed, &trace);
    MaskFile mf;
    mf.m = net.num_weights();
    mf.k = net.kept();
    mf.criterion = method;
    mf.T = trace.steps.empty() ? 1 : trace.steps.size();
    mf.seed = seed;
    mf.mask = net.mask;
    const std::string stem = cell_stem(method, fraction, seed);
    fs::create_directories(dir / "masks");
    save_mask_file(mf, dir / "masks" / (stem + ".json"));
    if (!trace.steps.empty()) {
      auto f = open_out(dir / "traces" / (stem + ".csv"));
      write_trace_csv(f, trace);
    }
    const LayerDensityProfile p = layer_density(net.mask, net.network.layer_offsets());
    std::printf("seed %llu: kept %zu of %zu%s\n", static_cast<unsigned long long>(seed), mf.k, mf.m,
                p.any_collapse() ? " (layer collapse)" : "");
  }
  return 0;
}

int cmd_train(const Common& c, const std::string& mask_path) {
  const ExperimentConfig cfg = load(c);
  const DatasetSplits data = make_splits(cfg.task);
  std::optional<MaskFile> mf;
  std::vector<std::uint64_t> seeds = cfg.seeds;
  if (!mask_path.empty()) {
    mf = load_mask_file(mask_path);
    if (!c.seed) seeds = {mf->seed};
  }
  int status = 0;
  const fs::path dir(cfg.out_dir);
  for (std::uint64_t seed : seeds) {
    MaskedNetwork net = build_network(cfg.arch, seed);
    if (mf) net.set_mask(mf->mask);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const TrainReport rep = train(net, data, tc);
    auto f = open_out(dir / ("train_s" + std::to_string(seed) + ".csv"));
    write_train_report_csv(f, rep);
    save_checkpoint(net, dir / ("checkpoint_s" + std::to_string(seed) + ".json"));
    if (rep.diverged) {
      std::printf("seed %llu: diverged\n", static_cast<unsigned long long>(seed));
      status = 1;
    } else {
      std::printf("seed %llu: test accuracy %.4f (kept %zu of %zu)\n", static_cast<unsigned long long>(seed),
                  rep.test_accuracy, net.kept(), net.num_weights());
    }
  }
  return status;
}

int cmd_run(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const std::vector<CellResult> cells = run_experiment(cfg);
  write_experiment_outputs(cfg, cells);
  emit_plots(fs::path(cfg.out_dir) / "results.csv", cfg.out_dir);
  std::size_t failed = 0;
  for (const auto& r : cells) {
    if (r.ok()) continue;
    ++failed;
    std::fprintf(stderr, "cell %s k=%s seed=%llu failed: %s\n", r.method.c_str(), csv::num(r.kept_fraction).c_str(),
                 static_cast<unsigned long long>(r.seed), r.error.c_str());
  }
  for (const auto& a : aggregate(cells)) {
    std::printf("%-20s sparsity %6.2f%%  acc %.4f +- %.4f (n=%zu)\n", a.method.c_str(), a.sparsity, a.mean, a.stddev,
                a.n);
  }
  std::printf("%zu of %zu cells completed; results in %s\n", cells.size() - failed, cells.size(), cfg.out_dir.c_str());
  return failed == 0 ? 0 : 1;
}

int cmd_ablate(const Common& c, double fraction, const std::vector<std::size_t>& Ts, const std::string& method,
               std::size_t eval_batches) {
  const ExperimentConfig cfg = load(c);
  const DatasetSplits data = make_splits(cfg.task);
  std::vector<SaliencyVsTRow> rows;
  for (std::uint64_t seed : cfg.seeds) {
    const MaskedNetwork net = build_network(cfg.arch, seed);
    const std::size_t k = kept_count(fraction, net.num_weights());
    const auto r = saliency_vs_T(net.network, data.train, k, Ts, method,
                                 std::min(cfg.batch_size_for_saliency(), data.train.size()), eval_batches, seed);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  auto f = open_out(fs::path(cfg.out_dir) / "saliency_vs_T.csv");
  write_saliency_vs_T_csv(f, rows);
  std::map<std::size_t, std::vector<double>> by_T;
  for (const auto& r : rows) by_T[r.T].push_back(r.ratio);
  for (const auto& [T, v] : by_T) std::printf("T=%-4zu mean S(T)/S(1) %.4f\n", T, mean_of(v));
  return 0;
}

int cmd_oracle(const Common& c, const std::string& mode, std::size_t k, std::size_t T, std::size_t p,
               std::size_t samples) {
  const ExperimentConfig cfg = load(c);
  const DatasetSplits data = make_splits(cfg.task);
  const std::size_t b = std::min(cfg.batch_size_for_saliency(), data.train.size());
  const fs::path dir(cfg.out_dir);
  if (mode == "brute") {
    auto f = open_out(dir / "brute_force.csv");
    csv::write_row(f, {"seed", "method", "saliency", "ratio", "evaluated"});
    for (std::uint64_t seed : cfg.seeds) {
      const MaskedNetwork net = build_network(cfg.arch, seed);
      const Dataset one = fixed_batch(data.train, b, seed);
      const std::vector<Batch> batches = {one.all()};
      const BruteForceResult best = brute_force_best_mask(net.network, k, batches, cfg.jobs);
      csv::write_row(f, {std::to_string(seed), "optimum", csv::num(best.saliency), "1", csv::num(best.evaluated)});
      for (const std::string method : {"snip", "iter-snip"}) {
        BatchSampler sampler(one, one.size(), 0);
        const PrunerConfig pc = method == "snip" ? PrunerConfig::snip() : PrunerConfig::iter_snip(T);
        const Mask mask = prune(net.network, k, pc, sampler).mask;
        const double s = mask_saliency(net.network, mask, Semantics::pruned, batches);
        csv::write_row(f, {std::to_string(seed), method, csv::num(s), csv::num(s / best.saliency), ""});
        std::printf("seed %llu %-10s S/S* = %.4f\n", static_cast<unsigned long long>(seed), method.c_str(),
                    s / best.saliency);
      }
    }
    return 0;
  }
  if (mode != "local") throw std::invalid_argument("oracle mode must be brute or local");
  auto f = open_out(dir / "local_opt.csv");
  csv::write_row(f, {"seed", "t", "p", "base_saliency", "worst_slack", "swaps", "sampled"});
  for (std::uint64_t seed : cfg.seeds) {
    const MaskedNetwork net = build_network(cfg.arch, seed);
    const Dataset one = fixed_batch(data.train, b, seed);
    const std::vector<Batch> batches = {one.all()};
    BatchSampler sampler(one, one.size(), 0);
    const PruneResult pr = prune(net.network, k, PrunerConfig::iter_snip(T), sampler);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t + 1 < pr.trace.masks.size(); ++t) {
      const Mask& ct = pr.trace.masks[t];
      const Mask& cn = pr.trace.masks[t + 1];
      const std::size_t room = mask_count(ct) - mask_count(cn);
      if (p > room || p > mask_count(cn)) continue;
      std::optional<SwapSampling> sampling;
      if (samples) sampling = SwapSampling{samples, seed};
      const LocalOptReport r = local_optimality(net.network, ct, cn, p, batches, sampling);
      csv::write_row(f, {std::to_string(seed), csv::num(t), csv::num(p), csv::num(r.base_saliency),
                         csv::num(r.worst_slack), csv::num(r.swaps), r.sampled ? "1" : "0"});
      worst = std::max(worst, r.worst_slack);
    }
    std::printf("seed %llu: eps* = %.6g\n", static_cast<unsigned long long>(seed), worst);
  }
  return 0;
}

int cmd_analyze(const Common& c, std::size_t eval_batches) {
  const ExperimentConfig cfg = load(c);
  const DatasetSplits data = make_splits(cfg.task);
  std::vector<LabeledProfile> profiles;
  // (method, seed) -> masks over the configured fractions
  std::map<std::pair<std::string, std::uint64_t>, std::vector<Mask>> masks;
  for (const auto& method : cfg.methods) {
    if (method == "dense") continue;
    for (double f : cfg.kept_fractions) {
      for (std::uint64_t seed : cfg.seeds) {
        const MaskedNetwork net = prune_cell(cfg, data, method, f, seed);
        profiles.push_back({method, f, seed, layer_density(net.mask, net.network.layer_offsets())});
        masks[{method, seed}].push_back(net.mask);
      }
    }
  }
  const fs::path dir(cfg.out_dir);
  {
    auto f = open_out(dir / "density.csv");
    write_density_csv(f, profiles);
  }
  {
    auto f = open_out(dir / "consistency.csv");
    write_consistency_csv(f, consistency(profiles));
  }
  {
    std::ofstream svg = open_out(dir / "density.svg");
    svg << density_plot_svg(profiles);
  }
  auto f = open_out(dir / "correlation.csv");
  csv::write_row(f, {"method", "seed", "masks", "pearson_r"});
  for (const auto& [key, ms] : masks) {
    if (ms.size() < 3) continue;
    const MaskedNetwork net = build_network(cfg.arch, key.second);
    BatchSampler sampler(data.train, std::min(cfg.batch_size_for_saliency(), data.train.size()), key.second);
    const std::vector<Batch> batches = sampler.take(eval_batches);
    try {
      const CorrelationReport r = sparsified_vs_pruned_correlation(net.network, ms, batches);
      csv::write_row(f, {key.first, std::to_string(key.second), csv::num(ms.size()), csv::num(r.r)});
      std::printf("%-12s seed %llu: r = %.4f\n", key.first.c_str(), static_cast<unsigned long long>(key.second), r.r);
    } catch (const std::invalid_argument& e) {
      csv::write_row(f, {key.first, std::to_string(key.second), csv::num(ms.size()), "nan"});
    }
  }
  std::printf("wrote density.csv, consistency.csv, density.svg and correlation.csv to %s\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_plot(const std::string& results, const std::string& out_dir) {
  const auto files = emit_plots(results, out_dir);
  if (files.empty()) std::printf("no run rows in %s; nothing to plot\n", results.c_str());
  for (const auto& p : files) std::printf("wrote %s\n", p.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pruning at initialization: FORCE, Iterative SNIP and baselines"};
  app.require_subcommand(1);

  Common prune_c, train_c, run_c, ablate_c, oracle_c, analyze_c;

  auto* prune_cmd = app.add_subcommand("prune", "compute masks for one method and kept fraction");
  add_common(prune_cmd, prune_c);
  std::string prune_method;
  double prune_fraction = 0.01;
  prune_cmd->add_option("--method", prune_method, "pruning method")->required();
  prune_cmd->add_option("--kept", prune_fraction, "kept fraction k/m")->check(CLI::Range(0.0, 1.0));

  auto* train_cmd = app.add_subcommand("train", "train with a saved mask (dense without one)");
  add_common(train_cmd, train_c);
  std::string mask_path;
  train_cmd->add_option("--mask", mask_path, "mask file written by prune or run")->check(CLI::ExistingFile);

  auto* run_cmd = app.add_subcommand("run", "full prune-train-test sweep");
  add_common(run_cmd, run_c);

  auto* ablate_cmd = app.add_subcommand("ablate-T", "final-mask saliency against the number of iterations");
  add_common(ablate_cmd, ablate_c);
  double ablate_fraction = 0.01;
  std::vector<std::size_t> Ts = {1, 2, 5, 10, 20};
  std::string ablate_method = "iter-snip";
  std::size_t eval_batches = 4;
  ablate_cmd->add_option("--kept", ablate_fraction, "kept fraction k/m")->check(CLI::Range(0.0, 1.0));
  ablate_cmd->add_option("--T", Ts, "iteration counts; must include 1")->delimiter(',');
  ablate_cmd->add_option("--method", ablate_method, "iter-snip, force or iter-grasp");
  ablate_cmd->add_option("--eval-batches", eval_batches, "batches used to score the final masks");

  auto* oracle_cmd = app.add_subcommand("oracle", "brute-force optimum or local optimality on a small net");
  add_common(oracle_cmd, oracle_c);
  std::string oracle_mode = "brute";
  std::size_t oracle_k = 4, oracle_T = 8, oracle_p = 1, oracle_samples = 0;
  oracle_cmd->add_option("--mode", oracle_mode, "brute or local")->check(CLI::IsMember({"brute", "local"}));
  oracle_cmd->add_option("-k,--kept-count", oracle_k, "number of kept weights");
  oracle_cmd->add_option("--T", oracle_T, "Iterative SNIP steps");
  oracle_cmd->add_option("--p", oracle_p, "swap size for local optimality");
  oracle_cmd->add_option("--samples", oracle_samples, "sample this many swaps instead of enumerating");

  auto* analyze_cmd = app.add_subcommand("analyze", "layer densities, consistency and semantics correlation");
  add_common(analyze_cmd, analyze_c);
  std::size_t analyze_batches = 4;
  analyze_cmd->add_option("--eval-batches", analyze_batches, "batches used for the correlation");

  auto* plot_cmd = app.add_subcommand("plot", "render accuracy.svg from a results.csv");
  std::string results, plot_out = ".";
  plot_cmd->add_option("results", results, "results.csv")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--out-dir", plot_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prune_cmd) return cmd_prune(prune_c, prune_method, prune_fraction);
    if (*train_cmd) return cmd_train(train_c, mask_path);
    if (*run_cmd) return cmd_run(run_c);
    if (*ablate_cmd) return cmd_ablate(ablate_c, ablate_fraction, Ts, ablate_method, eval_batches);
    if (*oracle_cmd) return cmd_oracle(oracle_c, oracle_mode, oracle_k, oracle_T, oracle_p, oracle_samples);
    if (*analyze_cmd) return cmd_analyze(analyze_c, analyze_batches);
    if (*plot_cmd) return cmd_plot(results, plot_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
