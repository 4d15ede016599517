#pragma once

// Synthetic classification tasks, the IDX image/label format, and batching.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pai/nn.hpp"

namespace pai {

struct Dataset {
  Shape feature_shape;         // per example
  std::vector<double> inputs;  // size() * prod(feature_shape), row-major
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_size() const { return shape_numel(feature_shape); }
  std::span<const double> example(std::size_t i) const;
  Batch gather(std::span<const std::size_t> indices) const;
  Batch all() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  // Throws if labels are out of range or sizes disagree.
  void validate() const;
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Shuffles once with `seed`, holds out `test_fraction` for test and then
// `val_fraction` of the remainder for validation. Splits are disjoint.
DatasetSplits split_dataset(const Dataset& data, double test_fraction, double val_fraction, std::uint64_t seed);

// Isotropic Gaussian clusters of std `spread` around equidistant means.
Dataset gen_blobs(std::size_t classes, std::size_t count, std::size_t dim, double spread, std::uint64_t seed);

// Interleaved spiral arms in the unit disk, one full turn each, with Gaussian
// noise of std `noise`.
Dataset gen_spirals(std::size_t classes, std::size_t count, double noise, std::uint64_t seed);

// --- IDX -------------------------------------------------------------------------

class IdxError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, truncated, count_mismatch };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Raw unsigned-byte IDX payload.
struct IdxArray {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;
};

IdxArray read_idx(const std::filesystem::path& path, std::uint32_t expected_magic);
void write_idx(const IdxArray& array, const std::filesystem::path& path);

// Images scaled by 1/255 into [0,1]; feature shape (1, rows, cols).
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
// Inverse of load_idx for datasets whose inputs are multiples of 1/255.
void save_idx(const Dataset& data, const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

struct Normalization {
  double mean = 0.0;
  double stddev = 1.0;
};

Normalization fit_normalization(const Dataset& data);
void apply_normalization(Dataset& data, Normalization n);

// --- batching ------------------------------------------------------------------------

// max(128, 10 * classes)
std::size_t default_saliency_batch_size(std::size_t classes);

// Draws fixed-size batches. Without replacement, each epoch walks a fresh
// permutation and drops the trailing partial batch. The dataset must outlive
// the sampler.
class BatchSampler {
 public:
  BatchSampler(const Dataset& data, std::size_t batch_size, std::uint64_t seed, bool with_replacement = false);

  Batch next();
  std::vector<Batch> take(std::size_t count);
  // Index list of the next batch without materializing it.
  std::vector<std::size_t> next_indices();

  std::size_t batch_size() const { return batch_size_; }
  std::size_t batches_per_epoch() const { return data_->size() / batch_size_; }
  const Dataset& dataset() const { return *data_; }

 private:
  void reshuffle();

  const Dataset* data_;
  std::size_t batch_size_;
  bool with_replacement_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace pai
