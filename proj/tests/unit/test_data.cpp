#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "pai/data.hpp"
#include "pai/training.hpp"

using namespace pai;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pai_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_raw(const fs::path& p, const std::vector<std::uint32_t>& header, const std::vector<unsigned char>& body) {
  std::ofstream out(p, std::ios::binary);
  for (auto h : header) put_u32(out, h);
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
}

IdxError::Kind idx_error_kind(const fs::path& images, const fs::path& labels) {
  try {
    load_idx(images, labels);
  } catch (const IdxError& e) {
    return e.kind();
  }
  FAIL("load_idx did not throw");
  return IdxError::Kind::io;
}

// Full-batch gradient descent on softmax regression; returns the best training
// accuracy seen.
double linear_fit_accuracy(const Dataset& d) {
  const std::size_t f = d.feature_size(), c = d.num_classes, n = d.size();
  std::vector<double> w(c * (f + 1), 0.0);
  double best = 0.0;
  for (int it = 0; it < 2000; ++it) {
    std::vector<double> g(w.size(), 0.0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = d.example(i);
      std::vector<double> z(c);
      for (std::size_t k = 0; k < c; ++k) {
        z[k] = w[k * (f + 1) + f];
        for (std::size_t j = 0; j < f; ++j) z[k] += w[k * (f + 1) + j] * x[j];
      }
      const auto top = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
      if (static_cast<int>(top) == d.labels[i]) ++correct;
      const double mx = z[top];
      double s = 0.0;
      for (double& v : z) s += (v = std::exp(v - mx));
      for (std::size_t k = 0; k < c; ++k) {
        const double r = z[k] / s - (static_cast<int>(k) == d.labels[i] ? 1.0 : 0.0);
        for (std::size_t j = 0; j < f; ++j) g[k * (f + 1) + j] += r * x[j];
        g[k * (f + 1) + f] += r;
      }
    }
    best = std::max(best, static_cast<double>(correct) / static_cast<double>(n));
    for (std::size_t q = 0; q < w.size(); ++q) w[q] -= 0.5 * g[q] / static_cast<double>(n);
  }
  return best;
}

}  // namespace

TEST_CASE("blobs with zero spread are point masses and seeds reproduce") {
  const Dataset d = gen_blobs(3, 30, 4, 0.0, 7);
  CHECK(d.size() == 30);
  CHECK(d.feature_shape == Shape{4});
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (d.labels[i] != d.labels[j]) continue;
      const auto a = d.example(i), b = d.example(j);
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
  }
  const Dataset e = gen_blobs(3, 30, 4, 0.0, 7);
  CHECK(d.inputs == e.inputs);
  CHECK(d.labels == e.labels);

  const Dataset s1 = gen_spirals(2, 100, 0.1, 3), s2 = gen_spirals(2, 100, 0.1, 3), s3 = gen_spirals(2, 100, 0.1, 4);
  CHECK(s1.inputs == s2.inputs);
  CHECK(s1.labels == s2.labels);
  CHECK(s1.inputs != s3.inputs);
}

TEST_CASE("generators balance classes and reject bad sizes") {
  const Dataset d = gen_spirals(3, 301, 0.0, 0);
  std::vector<int> counts(3, 0);
  for (int l : d.labels) ++counts[static_cast<std::size_t>(l)];
  CHECK(counts == std::vector<int>{101, 100, 100});
  CHECK_THROWS_AS(gen_spirals(1, 10, 0.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(gen_blobs(2, 10, 0, 0.1, 0), std::invalid_argument);
  CHECK_THROWS_AS(gen_blobs(2, 10, 2, -1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(gen_blobs(4, 3, 2, 0.1, 0), std::invalid_argument);
}

TEST_CASE("noise-free spirals are not linearly separable") {
  const Dataset d = gen_spirals(2, 400, 0.0, 1);
  CHECK(linear_fit_accuracy(d) <= 0.60);
  // The same oracle separates well-spread blobs almost perfectly.
  CHECK(linear_fit_accuracy(gen_blobs(2, 400, 2, 0.3, 1)) >= 0.95);
}

TEST_CASE("a dense MLP fits two blobs") {
  const Dataset d = gen_blobs(2, 1000, 2, 0.3, 5);
  const DatasetSplits s = split_dataset(d, 0.2, 0.1, 5);
  MaskedNetwork net = build_network(Architecture::mlp({2, 16, 2}), 5);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 5;
  const TrainReport r = train(net, s, cfg);
  CHECK_FALSE(r.diverged);
  CHECK(r.test_accuracy >= 0.95);
}

TEST_CASE("IDX images scale bytes by 1/255") {
  const fs::path dir = temp_dir("idx_scale");
  write_raw(dir / "img", {kIdxImagesMagic, 1, 2, 2}, {0, 128, 255, 64});
  write_raw(dir / "lab", {kIdxLabelsMagic, 1}, {3});
  const Dataset d = load_idx(dir / "img", dir / "lab");
  CHECK(d.feature_shape == Shape{1, 2, 2});
  REQUIRE(d.inputs.size() == 4);
  CHECK(d.inputs[0] == 0.0);
  CHECK(d.inputs[1] == doctest::Approx(0.50196).epsilon(1e-4));
  CHECK(d.inputs[2] == 1.0);
  CHECK(d.inputs[3] == doctest::Approx(0.25098).epsilon(1e-4));
  CHECK(d.labels == std::vector<int>{3});
  CHECK(d.num_classes == 4);
}

TEST_CASE("IDX errors are distinguished") {
  const fs::path dir = temp_dir("idx_errors");
  write_raw(dir / "img", {kIdxImagesMagic, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  write_raw(dir / "lab", {kIdxLabelsMagic, 2}, {0, 1});
  write_raw(dir / "lab3", {kIdxLabelsMagic, 3}, {0, 1, 0});
  write_raw(dir / "short", {kIdxImagesMagic, 2, 2, 2}, {1, 2, 3});
  CHECK_NOTHROW(load_idx(dir / "img", dir / "lab"));
  CHECK(idx_error_kind(dir / "lab", dir / "lab") == IdxError::Kind::bad_magic);
  CHECK(idx_error_kind(dir / "short", dir / "lab") == IdxError::Kind::truncated);
  CHECK(idx_error_kind(dir / "img", dir / "lab3") == IdxError::Kind::count_mismatch);
  CHECK(idx_error_kind(dir / "missing", dir / "lab") == IdxError::Kind::io);
}

TEST_CASE("IDX save and load round-trip bit-exactly") {
  const fs::path dir = temp_dir("idx_roundtrip");
  Dataset d;
  d.feature_shape = {1, 3, 2};
  d.num_classes = 10;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 6; ++j) d.inputs.push_back(static_cast<double>((i * 37 + j * 11) % 256) / 255.0);
    d.labels.push_back((i * 3) % 10);
  }
  save_idx(d, dir / "img", dir / "lab");
  const Dataset r = load_idx(dir / "img", dir / "lab");
  CHECK(r.feature_shape == d.feature_shape);
  CHECK(r.inputs == d.inputs);
  CHECK(r.labels == d.labels);

  const IdxArray raw = read_idx(dir / "img", kIdxImagesMagic);
  write_idx(raw, dir / "img2");
  const IdxArray again = read_idx(dir / "img2", kIdxImagesMagic);
  CHECK(again.dims == raw.dims);
  CHECK(again.bytes == raw.bytes);
}

TEST_CASE("sampler epochs partition the data into full batches") {
  const Dataset d = gen_blobs(2, 103, 2, 0.5, 0);
  BatchSampler s(d, 10, 42);
  CHECK(s.batches_per_epoch() == 10);
  std::multiset<std::size_t> seen;
  for (int b = 0; b < 10; ++b) {
    const auto idx = s.next_indices();
    CHECK(idx.size() == 10);
    seen.insert(idx.begin(), idx.end());
  }
  CHECK(seen.size() == 100);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 100);
  CHECK(s.next().size() == 10);

  BatchSampler a(d, 7, 9), b(d, 7, 9), c(d, 7, 10);
  const auto ia = a.next_indices(), ib = b.next_indices(), ic = c.next_indices();
  CHECK(ia == ib);
  CHECK(ia != ic);

  BatchSampler rep(d, 200, 1, true);
  CHECK(rep.next().size() == 200);
  CHECK_THROWS_AS(BatchSampler(d, 0, 1), std::invalid_argument);
}

TEST_CASE("gathered batches hold the selected examples") {
  const Dataset d = gen_spirals(2, 20, 0.1, 0);
  const std::vector<std::size_t> idx = {3, 0, 7};
  const Batch b = d.gather(idx);
  CHECK(b.inputs.shape == Shape{3, 2});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    CHECK(b.labels[r] == d.labels[idx[r]]);
    CHECK(b.inputs.data[2 * r] == d.example(idx[r])[0]);
    CHECK(b.inputs.data[2 * r + 1] == d.example(idx[r])[1]);
  }
}

TEST_CASE("splits are disjoint and sized by the fractions") {
  const Dataset d = gen_spirals(2, 2000, 0.08, 11);
  const DatasetSplits s = split_dataset(d, 0.2, 0.1, 11);
  CHECK(s.test.size() == 400);
  CHECK(s.val.size() == 160);
  CHECK(s.train.size() == 1440);
  std::set<std::pair<double, double>> points;
  for (const Dataset* part : {&s.train, &s.val, &s.test}) {
    for (std::size_t i = 0; i < part->size(); ++i) points.insert({part->example(i)[0], part->example(i)[1]});
  }
  CHECK(points.size() == 2000);
  CHECK_THROWS_AS(split_dataset(d, 1.0, 0.1, 0), std::invalid_argument);
}

TEST_CASE("normalization uses train statistics") {
  Dataset d;
  d.feature_shape = {1};
  d.num_classes = 2;
  d.inputs = {1.0, 3.0, 5.0, 7.0};
  d.labels = {0, 1, 0, 1};
  const Normalization n = fit_normalization(d);
  CHECK(n.mean == doctest::Approx(4.0));
  CHECK(n.stddev == doctest::Approx(std::sqrt(5.0)));
  apply_normalization(d, n);
  CHECK(d.inputs[0] == doctest::Approx(-3.0 / std::sqrt(5.0)));

  Dataset flat = d;
  flat.inputs = {2.0, 2.0, 2.0, 2.0};
  CHECK(fit_normalization(flat).stddev == 1.0);
}

TEST_CASE("default saliency batch size") {
  CHECK(default_saliency_batch_size(2) == 128);
  CHECK(default_saliency_batch_size(10) == 128);
  CHECK(default_saliency_batch_size(100) == 1000);
}
