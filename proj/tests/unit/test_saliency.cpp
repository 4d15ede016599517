#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pai/oracle.hpp"
#include "pai/saliency.hpp"
#include "support/test_models.hpp"

using namespace pai;
using pai::testing::SeparableQuadratic;

namespace {

// L(w) = sum_i x_i w_i where x is the batch input row: the gradient is the batch
// itself, so per-batch signs can be chosen freely.
class LinearProbe final : public PrunableModel {
 public:
  explicit LinearProbe(std::vector<double> theta) : theta_(std::move(theta)) {}
  std::size_t num_weights() const override { return theta_.size(); }
  std::span<const double> weights() const override { return theta_; }
  LossGrad loss_and_grad_at(std::span<const double> w, const Batch& b) const override {
    LossGrad lg;
    lg.grad = b.inputs.data;
    for (std::size_t i = 0; i < w.size(); ++i) lg.loss += w[i] * lg.grad[i];
    return lg;
  }

 private:
  std::vector<double> theta_;
};

Batch row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Batch{Tensor({1, n}, std::move(v)), {0}};
}

}  // namespace

TEST_CASE("connection sensitivity matches |theta * grad| on a network") {
  std::mt19937_64 rng(4);
  const MaskedNetwork net = build_network(Architecture::mlp({3, 5, 2}), 4);
  const Batch b = pai::testing::random_batch(net.network.arch(), 16, rng);
  const std::vector<Batch> batches = {b};
  const SaliencyVector s = connection_sensitivity(net, batches);
  const LossGrad lg = loss_and_grad(net, b);
  REQUIRE(s.size() == net.num_weights());
  CHECK(s.criterion == Criterion::snip);
  CHECK(s.batch_count == 1);
  const auto theta = net.network.weights();
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.scores[i] == doctest::Approx(std::abs(theta[i] * lg.grad[i])));

  // Independent check of the gradient itself.
  const ScalarFn f = [&](std::span<const double> w) { return net.network.loss_and_grad_at(w, b).loss; };
  const auto fd = fd_gradient(f, net.effective_weights(), 1e-6);
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s.scores[i] == doctest::Approx(std::abs(theta[i] * fd[i])).epsilon(1e-5).scale(1e-8));
  }
}

TEST_CASE("batch gradients are averaged with their signs") {
  const LinearProbe model({2.0, -1.0, 3.0});
  const std::vector<Batch> batches = {row({1.0, 2.0, -4.0}), row({-1.0, 0.0, 2.0})};
  const SaliencyVector s = connection_sensitivity(model, full_mask(3), Semantics::pruned, batches);
  CHECK(s.scores[0] == 0.0);
  CHECK(s.scores[1] == doctest::Approx(1.0));
  CHECK(s.scores[2] == doctest::Approx(3.0));
  CHECK(s.batch_count == 2);
  CHECK(mean_gradient(model, full_mask(3), Semantics::pruned, batches) == std::vector<double>{0.0, 1.0, -1.0});
}

TEST_CASE("semantics decide the gradient of removed weights") {
  const LinearProbe model({2.0, -1.0, 3.0});
  const std::vector<Batch> batches = {row({1.0, 2.0, -4.0})};
  const Mask c = {1, 0, 1};
  const SaliencyVector pruned = connection_sensitivity(model, c, Semantics::pruned, batches);
  const SaliencyVector sparse = connection_sensitivity(model, c, Semantics::sparsified, batches);
  CHECK(pruned.scores == std::vector<double>{2.0, 0.0, 12.0});
  CHECK(sparse.scores == std::vector<double>{2.0, 2.0, 12.0});
  CHECK(pruned.criterion == Criterion::snip);
  CHECK(sparse.criterion == Criterion::force);
  CHECK(sparse.mask == c);

  CHECK(mask_saliency(model, c, Semantics::pruned, batches) == doctest::Approx(14.0));
  CHECK(mask_saliency(model, c, Semantics::sparsified, batches) == doctest::Approx(16.0));
  CHECK(mask_saliency(model, full_mask(3), Semantics::pruned, batches) == doctest::Approx(16.0));
}

TEST_CASE("grasp scores on a quadratic use H = diag(2a)") {
  const SeparableQuadratic q = SeparableQuadratic::random(8, 2);
  const std::vector<Batch> batches = {row({0.0})};
  const std::vector<double> theta(q.weights().begin(), q.weights().end());
  const std::vector<double> g = q.loss_and_grad_at(theta, batches[0]).grad;
  // Recover a_i from the gradient at two points.
  std::vector<double> shifted = theta;
  for (double& v : shifted) v += 1.0;
  const std::vector<double> g1 = q.loss_and_grad_at(shifted, batches[0]).grad;
  const SaliencyVector s = grasp_scores(q, full_mask(8), Semantics::pruned, batches);
  CHECK(s.criterion == Criterion::grasp);
  for (std::size_t i = 0; i < 8; ++i) {
    const double h_ii = g1[i] - g[i];  // 2 a_i
    CHECK(s.scores[i] == doctest::Approx(theta[i] * h_ii * g[i]).epsilon(1e-6));
  }
}

TEST_CASE("grasp scores on a network match a finite-difference Hessian") {
  std::mt19937_64 rng(8);
  const MaskedNetwork net = build_network(Architecture::mlp({2, 3, 2}), 8);
  const std::vector<Batch> batches = {pai::testing::random_batch(net.network.arch(), 12, rng)};
  const ScalarFn f = [&](std::span<const double> w) { return net.network.loss_and_grad_at(w, batches[0]).loss; };
  const auto w = net.effective_weights();
  const auto H = fd_hessian(f, w, 1e-4);
  const auto g = net.network.loss_and_grad_at(w, batches[0]).grad;
  const SaliencyVector s = grasp_scores(net, batches);
  const std::size_t m = w.size();
  for (std::size_t i = 0; i < m; ++i) {
    double hg = 0.0;
    for (std::size_t j = 0; j < m; ++j) hg += H[i * m + j] * g[j];
    CHECK(s.scores[i] == doctest::Approx(w[i] * hg).epsilon(1e-3).scale(1e-6));
  }
}

TEST_CASE("grad norm, magnitude and random scores") {
  const LinearProbe model({2.0, -1.0, 3.0});
  const std::vector<Batch> batches = {row({1.0, 2.0, -4.0})};
  const SaliencyVector gn = grad_norm_scores(model, {1, 1, 0}, batches);
  CHECK(gn.scores == std::vector<double>{1.0, 4.0, 0.0});
  CHECK(gn.criterion == Criterion::grad_norm);

  const std::vector<double> theta = {-3.0, 0.5, 2.0};
  CHECK(magnitude_scores(theta).scores == std::vector<double>{3.0, 0.5, 2.0});

  const SaliencyVector r1 = random_scores(100, 5), r2 = random_scores(100, 5), r3 = random_scores(100, 6);
  CHECK(r1.scores == r2.scores);
  CHECK(r1.scores != r3.scores);
  for (double v : r1.scores) CHECK((v >= 0.0 && v < 1.0));
}

TEST_CASE("criterion names round-trip") {
  for (Criterion c : {Criterion::snip, Criterion::force, Criterion::grasp, Criterion::grad_norm, Criterion::magnitude,
                      Criterion::random}) {
    CHECK(criterion_from_string(to_string(c)) == c);
  }
  CHECK_THROWS_AS(criterion_from_string("obd"), std::invalid_argument);
}

TEST_CASE("saliency inputs are validated") {
  const LinearProbe model({2.0, -1.0, 3.0});
  const std::vector<Batch> none;
  const std::vector<Batch> batches = {row({1.0, 2.0, -4.0})};
  CHECK_THROWS_AS(connection_sensitivity(model, full_mask(3), Semantics::pruned, none), std::invalid_argument);
  CHECK_THROWS_AS(connection_sensitivity(model, full_mask(2), Semantics::pruned, batches), std::invalid_argument);
  const LinearProbe bad({1.0, 1.0, 1.0});
  const std::vector<Batch> nan_batch = {row({std::nan(""), 0.0, 0.0})};
  CHECK_THROWS_AS(connection_sensitivity(bad, full_mask(3), Semantics::pruned, nan_batch), std::domain_error);
}

TEST_CASE("saliency csv lists flat index, layer and score") {
  SaliencyVector s;
  s.scores = {0.5, 1.0, 2.0};
  const std::vector<std::size_t> offsets = {0, 2, 3};
  std::ostringstream out;
  write_saliency_csv(out, s, offsets);
  CHECK(out.str().rfind("flat_index,layer,score\n", 0) == 0);
  CHECK(out.str().find("2,1,2") != std::string::npos);
  const std::vector<std::size_t> wrong = {0, 2};
  CHECK_THROWS_AS(write_saliency_csv(out, s, wrong), std::invalid_argument);
}
