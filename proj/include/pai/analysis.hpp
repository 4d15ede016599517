#pragma once

// Prune-train-test sweeps, diagnostics and SVG rendering.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pai/csv.hpp"
#include "pai/data.hpp"
#include "pai/nn.hpp"
#include "pai/pruning.hpp"
#include "pai/training.hpp"

namespace pai {

struct TaskSpec {
  std::string kind = "spirals";  // spirals | blobs | idx
  std::size_t classes = 2;
  std::size_t count = 2000;
  double noise = 0.08;   // spirals
  std::size_t dim = 2;   // blobs
  double spread = 0.5;   // blobs
  std::string images;    // idx
  std::string labels;    // idx
  bool normalize = false;  // idx tasks are always normalized
  double test_fraction = 0.2;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

DatasetSplits make_splits(const TaskSpec& task);

// Method names: dense, random, magnitude, snip, snip-mb, grasp, grasp-mb, force,
// iter-snip, iter-grasp, early-prune, early-prune-trained.
const std::vector<std::string>& known_methods();
bool is_known_method(const std::string& name);

struct ExperimentConfig {
  TaskSpec task;
  Architecture arch;
  std::vector<double> kept_fractions;  // k/m, each in (0, 1]
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  std::size_t iterations = 20;  // T for iterative methods; -mb variants use T*B batches
  std::size_t batches_per_iteration = 1;
  std::size_t saliency_batch_size = 0;  // 0: max(128, 10 * classes)
  std::size_t early_prune_epochs = 1;
  TrainConfig train;
  std::string out_dir = "out";
  std::size_t jobs = 1;

  void validate() const;
  std::size_t batch_size_for_saliency() const;
};

ExperimentConfig experiment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment(const std::filesystem::path& path);

// Pruner settings behind a method name (all but dense and early-prune*).
PrunerConfig pruner_for(const std::string& method, const ExperimentConfig& cfg, std::uint64_t seed);

// Kept count for a fraction: round(f * m) clamped to [1, m].
std::size_t kept_count(double kept_fraction, std::size_t m);

struct CellResult {
  std::string method;
  double kept_fraction = 1.0;
  std::uint64_t seed = 0;
  std::size_t kept = 0;
  std::size_t m = 0;
  double test_accuracy = 0.0;
  double prune_seconds = 0.0;
  double train_seconds = 0.0;
  bool collapse = false;
  std::string error;  // empty when the cell completed
  Mask mask;
  PruneTrace trace;

  bool ok() const { return error.empty(); }
  // Percentage of prunable weights removed; 0 for dense.
  double sparsity_percent() const;
};

// The pruning half of a cell: the seed's initialization with the method's mask
// applied (and, for early-prune-trained, the trained weights). Uses the same
// batch stream as run_cell.
MaskedNetwork prune_cell(const ExperimentConfig& cfg, const DatasetSplits& data, const std::string& method,
                         double kept_fraction, std::uint64_t seed, PruneTrace* trace = nullptr);

// One prune-train-test cell.
CellResult run_cell(const ExperimentConfig& cfg, const DatasetSplits& data, const std::string& method,
                    double kept_fraction, std::uint64_t seed);

// Every (method, fraction, seed) cell, sorted by that key regardless of the
// order in which worker threads finish. Dense runs once per seed.
std::vector<CellResult> run_experiment(const ExperimentConfig& cfg);

struct Aggregate {
  std::string method;
  double kept_fraction = 1.0;
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 when n < 2
  double sparsity = 0.0;
};

std::vector<Aggregate> aggregate(const std::vector<CellResult>& cells);
double mean_of(std::span<const double> v);
double sample_std(std::span<const double> v);

inline constexpr const char* kResultsSchema = "pai-results-v1";

// results.csv: kind,method,sparsity,kept_fraction,seed,test_acc,collapse,status
// where kind is run, mean or std (aggregate rows carry n in the seed column).
// Timings go to timings.csv so that results.csv depends only on the config.
void write_results_csv(std::ostream& out, const std::vector<CellResult>& cells);
void write_timings_csv(std::ostream& out, const std::vector<CellResult>& cells);

// Writes results.csv, timings.csv, the per-cell traces and masks under out_dir.
void write_experiment_outputs(const ExperimentConfig& cfg, const std::vector<CellResult>& cells);

struct SaliencyVsTRow {
  std::uint64_t seed = 0;
  std::size_t T = 1;
  double saliency = 0.0;
  double ratio = 1.0;  // saliency / saliency at T = 1 for the same seed
};

// Prunes with the iterative method at each T (T = 1 must be listed) and scores
// the final mask by S(theta, c) under pruned semantics on `eval_batches` fixed
// batches drawn once per seed.
std::vector<SaliencyVsTRow> saliency_vs_T(const PrunableModel& model, const Dataset& train, std::size_t k,
                                          const std::vector<std::size_t>& Ts, const std::string& method,
                                          std::size_t batch_size, std::size_t eval_batches, std::uint64_t seed);
void write_saliency_vs_T_csv(std::ostream& out, const std::vector<SaliencyVsTRow>& rows);

struct LayerDensity {
  std::size_t kept = 0;
  std::size_t total = 0;
  double fraction = 0.0;
  bool collapsed = false;
};

struct LayerDensityProfile {
  std::vector<LayerDensity> layers;
  std::size_t kept() const;
  bool any_collapse() const;
};

LayerDensityProfile layer_density(const Mask& mask, std::span<const std::size_t> layer_offsets);

struct LabeledProfile {
  std::string method;
  double kept_fraction = 1.0;
  std::uint64_t seed = 0;
  LayerDensityProfile profile;
};

struct ConsistencyRow {
  std::string method;
  double kept_fraction = 1.0;
  std::size_t layer = 0;
  std::size_t seeds = 0;
  double mean_fraction = 0.0;
  double std_fraction = 0.0;
  std::size_t rank = 0;  // 0 = densest layer at this (method, fraction)
};

// Per-layer spread across seeds at each (method, fraction) and the rank order of
// layer densities, so rank stability across fractions can be read off.
std::vector<ConsistencyRow> consistency(const std::vector<LabeledProfile>& profiles);
void write_consistency_csv(std::ostream& out, const std::vector<ConsistencyRow>& rows);
void write_density_csv(std::ostream& out, const std::vector<LabeledProfile>& profiles);

// Throws std::invalid_argument on mismatched lengths, fewer than 2 points or a
// zero-variance series.
double pearson(std::span<const double> x, std::span<const double> y);

struct CorrelationReport {
  std::vector<double> pruned;
  std::vector<double> sparsified;
  double r = 0.0;
};

// S(theta, c) for each mask under both semantics on the same batches. Needs at
// least 3 masks.
CorrelationReport sparsified_vs_pruned_correlation(const PrunableModel& model, const std::vector<Mask>& masks,
                                                   std::span<const Batch> batches);

// Accuracy against kept fraction (log x) with one polyline per method and a
// +-1 std band where a point has two or more seeds.
std::string accuracy_plot_svg(const csv::Table& results);
std::string density_plot_svg(const std::vector<LabeledProfile>& profiles);
std::string trace_plot_svg(const std::vector<std::pair<std::string, PruneTrace>>& traces);

// Reads results.csv and writes accuracy.svg into out_dir. Returns the files
// written; none when the table has no rows.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& results_csv,
                                             const std::filesystem::path& out_dir);

}  // namespace pai
