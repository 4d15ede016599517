#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pai/pruning.hpp"
#include "pai/training.hpp"

using namespace pai;

namespace {

DatasetSplits small_task(std::uint64_t seed) {
  return split_dataset(gen_spirals(2, 400, 0.08, seed), 0.2, 0.1, seed);
}

TrainConfig quick(std::size_t epochs, std::uint64_t seed) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 32;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("training leaves removed weights at zero and moves the rest") {
  const DatasetSplits s = small_task(0);
  MaskedNetwork net = build_network(Architecture::mlp({2, 16, 2}), 0);
  const std::vector<double> init(net.network.weights().begin(), net.network.weights().end());
  Mask mask(net.num_weights(), 0);
  for (std::size_t i = 0; i < mask.size(); i += 3) mask[i] = 1;
  net.set_mask(mask);
  const TrainReport r = train(net, s, quick(5, 0));
  CHECK_FALSE(r.diverged);
  CHECK(r.max_pruned_magnitude == 0.0);
  CHECK(max_pruned_magnitude(net) == 0.0);
  std::size_t moved = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) {
      CHECK(net.network.weights()[i] == 0.0);
    } else if (net.network.weights()[i] != init[i]) {
      ++moved;
    }
  }
  CHECK(moved == mask_count(mask));
  CHECK(r.epochs.size() == 5);
  CHECK(r.epochs.back().train_loss < r.epochs.front().train_loss);
}

TEST_CASE("constant logits score the majority-at-index-zero rate") {
  const DatasetSplits s = small_task(1);
  MaskedNetwork net = build_network(Architecture::mlp({2, 4, 2}), 1);
  for (double& w : net.network.mutable_weights()) w = 0.0;
  for (auto& b : net.network.mutable_biases()) std::fill(b.begin(), b.end(), 0.0);
  Dataset balanced = gen_spirals(2, 200, 0.1, 0);
  CHECK(evaluate(net, balanced) == doctest::Approx(0.5));
  // Ties go to class 0 whatever the class balance.
  const std::size_t zeros = static_cast<std::size_t>(std::count(s.test.labels.begin(), s.test.labels.end(), 0));
  CHECK(evaluate(net, s.test) == doctest::Approx(static_cast<double>(zeros) / static_cast<double>(s.test.size())));
}

TEST_CASE("evaluate agrees with a recount of argmax predictions") {
  MaskedNetwork net = build_network(Architecture::mlp({2, 8, 3}), 2);
  Dataset d = gen_spirals(3, 1100, 0.1, 2);
  const Tensor logits = net.network.forward(net.effective_weights(), d.all().inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < 3; ++c) {
      if (logits.data[i * 3 + c] > logits.data[i * 3 + best]) best = c;
    }
    if (static_cast<int>(best) == d.labels[i]) ++correct;
  }
  CHECK(evaluate(net, d) == doctest::Approx(static_cast<double>(correct) / 1100.0));
  Dataset empty;
  empty.feature_shape = {2};
  empty.num_classes = 3;
  CHECK_THROWS_AS(evaluate(net, empty), std::invalid_argument);
}

TEST_CASE("training is deterministic under a fixed seed") {
  const DatasetSplits s = small_task(3);
  MaskedNetwork a = build_network(Architecture::mlp({2, 8, 2}), 3);
  MaskedNetwork b = build_network(Architecture::mlp({2, 8, 2}), 3);
  const TrainReport ra = train(a, s, quick(3, 7));
  const TrainReport rb = train(b, s, quick(3, 7));
  CHECK(std::equal(a.network.weights().begin(), a.network.weights().end(), b.network.weights().begin()));
  CHECK(a.network.biases() == b.network.biases());
  CHECK(ra.test_accuracy == rb.test_accuracy);
  MaskedNetwork c = build_network(Architecture::mlp({2, 8, 2}), 3);
  train(c, s, quick(3, 8));
  CHECK_FALSE(std::equal(a.network.weights().begin(), a.network.weights().end(), c.network.weights().begin()));
}

TEST_CASE("divergence is reported instead of thrown") {
  const DatasetSplits s = small_task(4);
  MaskedNetwork net = build_network(Architecture::mlp({2, 16, 2}), 4);
  TrainConfig cfg = quick(3, 4);
  cfg.learning_rate = 1e200;
  cfg.momentum = 0.0;
  const TrainReport r = train(net, s, cfg);
  CHECK(r.diverged);
}

TEST_CASE("learning rate schedule and config validation") {
  TrainConfig c;
  c.epochs = 200;
  CHECK(c.drop_epochs() == std::vector<std::size_t>{100, 150});
  CHECK(c.learning_rate_at(0) == doctest::Approx(0.1));
  CHECK(c.learning_rate_at(99) == doctest::Approx(0.1));
  CHECK(c.learning_rate_at(100) == doctest::Approx(0.01));
  CHECK(c.learning_rate_at(150) == doctest::Approx(0.001));
  c.lr_drop_epochs = {10};
  CHECK(c.learning_rate_at(9) == doctest::Approx(0.1));
  CHECK(c.learning_rate_at(10) == doctest::Approx(0.01));
  CHECK_NOTHROW(c.validate());
  c.lr_drop_epochs = {300};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  TrainConfig z;
  z.learning_rate = 0.0;
  CHECK_THROWS_AS(z.validate(), std::invalid_argument);
  TrainConfig b;
  b.batch_size = 0;
  CHECK_THROWS_AS(b.validate(), std::invalid_argument);
}

TEST_CASE("train report csv") {
  TrainReport r;
  r.epochs = {{0, 0.7, 0.5}, {1, 0.4, 0.75}};
  std::ostringstream out;
  write_train_report_csv(out, r);
  const std::string text = out.str();
  CHECK(text.rfind("epoch,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') >= 3);
}
