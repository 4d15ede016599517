#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "pai/data.hpp"

namespace pai {

std::span<const double> Dataset::example(std::size_t i) const {
  const std::size_t f = feature_size();
  return std::span<const double>(inputs).subspan(i * f, f);
}

Batch Dataset::gather(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw std::invalid_argument("Dataset::gather: empty index list");
  const std::size_t f = feature_size();
  std::vector<double> values;
  values.reserve(indices.size() * f);
  std::vector<int> ys;
  ys.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("Dataset::gather: index " + std::to_string(i));
    auto ex = example(i);
    values.insert(values.end(), ex.begin(), ex.end());
    ys.push_back(labels[i]);
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), feature_shape.begin(), feature_shape.end());
  return Batch{Tensor(std::move(shape), std::move(values)), std::move(ys)};
}

Batch Dataset::all() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  return gather(idx);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.feature_shape = feature_shape;
  out.num_classes = num_classes;
  const std::size_t f = feature_size();
  out.inputs.reserve(indices.size() * f);
  for (std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("Dataset::subset: index " + std::to_string(i));
    auto ex = example(i);
    out.inputs.insert(out.inputs.end(), ex.begin(), ex.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

void Dataset::validate() const {
  if (labels.empty()) throw std::invalid_argument("Dataset: no examples");
  if (inputs.size() != labels.size() * feature_size()) throw std::invalid_argument("Dataset: inputs/labels size mismatch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw std::invalid_argument("Dataset: label " + std::to_string(y) + " outside [0," + std::to_string(num_classes) + ")");
    }
  }
}

DatasetSplits split_dataset(const Dataset& data, double test_fraction, double val_fraction, std::uint64_t seed) {
  data.validate();
  if (!(test_fraction >= 0.0 && test_fraction < 1.0) || !(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("split_dataset: fractions must lie in [0,1)");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(data.size())));
  const std::size_t rest = data.size() - n_test;
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(rest)));
  if (rest - n_val == 0) throw std::invalid_argument("split_dataset: no training examples left");
  std::span<const std::size_t> all(order);
  DatasetSplits s;
  s.test = data.subset(all.subspan(0, n_test));
  s.val = data.subset(all.subspan(n_test, n_val));
  s.train = data.subset(all.subspan(n_test + n_val));
  return s;
}

namespace {

void check_gen_sizes(const char* what, std::size_t classes, std::size_t count) {
  if (classes < 2) throw std::invalid_argument(std::string(what) + ": need at least 2 classes");
  if (count < classes) throw std::invalid_argument(std::string(what) + ": need at least one example per class");
}

std::size_t class_count(std::size_t c, std::size_t classes, std::size_t count) {
  return count / classes + (c < count % classes ? 1 : 0);
}

}  // namespace

Dataset gen_blobs(std::size_t classes, std::size_t count, std::size_t dim, double spread, std::uint64_t seed) {
  check_gen_sizes("gen_blobs", classes, count);
  if (dim < 1) throw std::invalid_argument("gen_blobs: dim must be >= 1");
  if (!(spread >= 0.0)) throw std::invalid_argument("gen_blobs: spread must be >= 0");
  // Means: 2*e_c when there is room (all pairwise distances 2*sqrt(2)); otherwise
  // evenly spaced on a line (dim 1) or on a radius-2 circle.
  std::vector<std::vector<double>> means(classes, std::vector<double>(dim, 0.0));
  for (std::size_t c = 0; c < classes; ++c) {
    if (dim >= classes) {
      means[c][c] = 2.0;
    } else if (dim == 1) {
      means[c][0] = 2.0 * static_cast<double>(c);
    } else {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
      means[c][0] = 2.0 * std::cos(a);
      means[c][1] = 2.0 * std::sin(a);
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset d;
  d.feature_shape = {dim};
  d.num_classes = classes;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < class_count(c, classes, count); ++i) {
      for (std::size_t k = 0; k < dim; ++k) d.inputs.push_back(means[c][k] + spread * noise(rng));
      d.labels.push_back(static_cast<int>(c));
    }
  }
  return d;
}

Dataset gen_spirals(std::size_t classes, std::size_t count, double noise, std::uint64_t seed) {
  check_gen_sizes("gen_spirals", classes, count);
  if (!(noise >= 0.0)) throw std::invalid_argument("gen_spirals: noise must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset d;
  d.feature_shape = {2};
  d.num_classes = classes;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < class_count(c, classes, count); ++i) {
      const double t = unit(rng);
      const double r = 0.1 + 0.9 * t;
      const double a = 2.0 * std::numbers::pi * (static_cast<double>(c) / static_cast<double>(classes) + t);
      const double nx = gauss(rng);
      const double ny = gauss(rng);
      d.inputs.push_back(r * std::cos(a) + noise * nx);
      d.inputs.push_back(r * std::sin(a) + noise * ny);
      d.labels.push_back(static_cast<int>(c));
    }
  }
  return d;
}

Normalization fit_normalization(const Dataset& data) {
  if (data.inputs.empty()) throw std::invalid_argument("fit_normalization: empty dataset");
  double mean = 0.0;
  for (double v : data.inputs) mean += v;
  mean /= static_cast<double>(data.inputs.size());
  double var = 0.0;
  for (double v : data.inputs) var += (v - mean) * (v - mean);
  var /= static_cast<double>(data.inputs.size());
  return {mean, var > 0.0 ? std::sqrt(var) : 1.0};
}

void apply_normalization(Dataset& data, Normalization n) {
  for (double& v : data.inputs) v = (v - n.mean) / n.stddev;
}

std::size_t default_saliency_batch_size(std::size_t classes) { return std::max<std::size_t>(128, 10 * classes); }

BatchSampler::BatchSampler(const Dataset& data, std::size_t batch_size, std::uint64_t seed, bool with_replacement)
    : data_(&data), batch_size_(batch_size), with_replacement_(with_replacement), rng_(seed) {
  data.validate();
  if (batch_size == 0) throw std::invalid_argument("BatchSampler: batch size must be >= 1");
  if (!with_replacement && batch_size > data.size()) {
    throw std::invalid_argument("BatchSampler: batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                                std::to_string(data.size()));
  }
  order_.resize(data.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!with_replacement_) reshuffle();
}

void BatchSampler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next_indices() {
  std::vector<std::size_t> idx(batch_size_);
  if (with_replacement_) {
    std::uniform_int_distribution<std::size_t> pick(0, data_->size() - 1);
    for (auto& i : idx) i = pick(rng_);
    return idx;
  }
  if (cursor_ + batch_size_ > order_.size()) reshuffle();
  std::copy_n(order_.begin() + static_cast<std::ptrdiff_t>(cursor_), batch_size_, idx.begin());
  cursor_ += batch_size_;
  return idx;
}

Batch BatchSampler::next() { return data_->gather(next_indices()); }

std::vector<Batch> BatchSampler::take(std::size_t count) {
  std::vector<Batch> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(next());
  return out;
}

}  // namespace pai
