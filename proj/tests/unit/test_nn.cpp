#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "pai/kernels.hpp"
#include "pai/nn.hpp"
#include "pai/oracle.hpp"
#include "support/test_models.hpp"

using namespace pai;

TEST_CASE("flat index order is layer-major then row-major") {
  const MaskedNetwork net = build_network(Architecture::mlp({2, 3, 2}), 0);
  const Network& n = net.network;
  CHECK(n.num_weights() == 12);
  CHECK(n.layer_offsets() == std::vector<std::size_t>{0, 6, 12});
  // Dense weight shape is (out, in): flat 1 is row 0, column 1.
  CHECK(n.locate(1).layer == 0);
  CHECK(n.locate(1).index == 1);
  CHECK(n.locate(7).layer == 1);
  CHECK(n.locate(7).index == 1);
  CHECK(n.flat_index({1, 5}) == 11);
  CHECK_THROWS(n.locate(12));
}

TEST_CASE("kaiming normal init has std sqrt(2 / fan_in) and zero biases") {
  const MaskedNetwork net = build_network(Architecture::mlp({200, 300, 2}), 3);
  const auto w = net.network.weights();
  double ss = 0.0;
  for (std::size_t i = 0; i < 60000; ++i) ss += w[i] * w[i];
  CHECK(std::sqrt(ss / 60000.0) == doctest::Approx(std::sqrt(2.0 / 200.0)).epsilon(0.02));
  for (const auto& b : net.network.biases()) {
    for (double v : b) CHECK(v == 0.0);
  }
  CHECK(net.kept() == net.num_weights());
  CHECK(net.semantics == Semantics::pruned);

  Architecture conv;
  conv.input_shape = {3, 8, 8};
  conv.layers = {LayerSpec::conv(3, 16, 3), LayerSpec::dense(16 * 6 * 6, 2)};
  CHECK(conv.layers[0].init_fan_in() == 27);
  const MaskedNetwork cn = build_network(conv, 1);
  double cs = 0.0;
  for (std::size_t i = 0; i < 16 * 27; ++i) cs += cn.network.weights()[i] * cn.network.weights()[i];
  CHECK(std::sqrt(cs / (16 * 27)) == doctest::Approx(std::sqrt(2.0 / 27.0)).epsilon(0.1));
}

TEST_CASE("same seed gives identical weights, different seeds differ") {
  const auto a = build_network(Architecture::mlp({2, 8, 2}), 9);
  const auto b = build_network(Architecture::mlp({2, 8, 2}), 9);
  const auto c = build_network(Architecture::mlp({2, 8, 2}), 10);
  CHECK(std::equal(a.network.weights().begin(), a.network.weights().end(), b.network.weights().begin()));
  CHECK_FALSE(std::equal(a.network.weights().begin(), a.network.weights().end(), c.network.weights().begin()));
}

TEST_CASE("pruned semantics zero removed gradients, sparsified keeps them") {
  std::mt19937_64 rng(4);
  MaskedNetwork net = build_network(Architecture::mlp({3, 5, 2}), 2);
  const Batch batch = testing::random_batch(net.network.arch(), 16, rng);
  Mask mask = full_mask(net.num_weights());
  for (std::size_t i = 0; i < mask.size(); i += 3) mask[i] = 0;

  const LossGrad pr = masked_loss_and_grad(net.network, mask, Semantics::pruned, batch);
  const LossGrad sp = masked_loss_and_grad(net.network, mask, Semantics::sparsified, batch);
  CHECK(pr.loss == sp.loss);
  bool some_nonzero = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      CHECK(pr.grad[i] == sp.grad[i]);
    } else {
      CHECK(pr.grad[i] == 0.0);
      some_nonzero = some_nonzero || sp.grad[i] != 0.0;
    }
  }
  CHECK(some_nonzero);

  // The sparsified gradient is the derivative with respect to the effective weight.
  const std::vector<double> eff = apply_mask(net.network.weights(), mask);
  const auto f = [&](std::span<const double> w) { return net.network.loss_and_grad_at(w, batch).loss; };
  const std::vector<double> fd = fd_gradient(f, eff, 1e-6);
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(sp.grad[i] == doctest::Approx(fd[i]).epsilon(1e-6).scale(1.0));

  net.set_mask(mask);
  CHECK(loss_and_grad(net, batch).grad == pr.grad);
  net.semantics = Semantics::sparsified;
  CHECK(loss_and_grad(net, batch).grad == sp.grad);
}

TEST_CASE("mask helpers") {
  const Mask m = {1, 0, 1, 1, 0, 0, 0, 0, 1, 1};
  CHECK(mask_count(m) == 5);
  CHECK(mask_support(m) == std::vector<std::size_t>{0, 2, 3, 8, 9});
  CHECK(mask_to_hex(m) == "0d03");
  CHECK(mask_from_hex("0d03", 10) == m);
  CHECK_THROWS(mask_from_hex("0d", 10));
  CHECK_THROWS(mask_from_hex("0dzz", 10));
  // Padding bits beyond m must be zero.
  CHECK_THROWS(mask_from_hex("0d07", 10));
  CHECK(apply_mask(std::vector<double>{1.0, 2.0}, Mask{0, 1}) == std::vector<double>{0.0, 2.0});
  CHECK(semantics_from_string(to_string(Semantics::sparsified)) == Semantics::sparsified);
  CHECK_THROWS(semantics_from_string("bogus"));
}

TEST_CASE("architecture validation and json") {
  Architecture bad = Architecture::mlp({2, 3, 2});
  bad.layers[1].fan_in = 4;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  Architecture conv;
  conv.input_shape = {1, 6, 6};
  conv.layers = {LayerSpec::conv(1, 2, 3, 2, 1), LayerSpec::dense(2 * 3 * 3, 3)};
  conv.validate();
  CHECK(conv.num_weights() == 18 + 54);
  CHECK(conv.num_classes() == 3);
  const Architecture back = architecture_from_json(to_json(conv));
  CHECK(to_json(back) == to_json(conv));
  CHECK(architecture_from_json(nlohmann::json::parse(R"({"mlp":[2,64,64,2]})")).num_weights() == 4352);
}

TEST_CASE("conv network forward agrees between backends of the kernel table") {
  Architecture conv;
  conv.input_shape = {2, 5, 5};
  conv.layers = {LayerSpec::conv(2, 3, 3, 1, 1), LayerSpec::conv(3, 2, 3, 2, 0), LayerSpec::dense(8, 2)};
  const MaskedNetwork net = build_network(conv, 8);
  std::mt19937_64 rng(1);
  const Batch b = testing::random_batch(conv, 3, rng);
  const kernels::Backend before = kernels::active_backend();
  kernels::set_backend(kernels::Backend::scalar);
  const Tensor ref = masked_forward(net, b.inputs);
  const LossGrad ref_lg = loss_and_grad(net, b);
  CHECK(ref.shape == Shape{3, 2});
  if (kernels::avx2_available()) {
    kernels::set_backend(kernels::Backend::avx2);
    const Tensor vec = masked_forward(net, b.inputs);
    const LossGrad vec_lg = loss_and_grad(net, b);
    for (std::size_t i = 0; i < ref.numel(); ++i) CHECK(vec.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < ref_lg.grad.size(); ++i) {
      CHECK(vec_lg.grad[i] == doctest::Approx(ref_lg.grad[i]).epsilon(1e-12).scale(1.0));
    }
  }
  kernels::set_backend(before);
}

TEST_CASE("checkpoint round trip is exact") {
  MaskedNetwork net = build_network(Architecture::mlp({2, 4, 3}), 11);
  net.network.mutable_biases()[0][1] = 0.1 + 0.2;
  Mask m = full_mask(net.num_weights());
  m[3] = 0;
  net.set_mask(m);
  net.semantics = Semantics::sparsified;
  const auto path = std::filesystem::temp_directory_path() / "pai_ckpt_test.json";
  save_checkpoint(net, path);
  const MaskedNetwork back = load_checkpoint(path);
  CHECK(std::equal(back.network.weights().begin(), back.network.weights().end(), net.network.weights().begin()));
  CHECK(back.network.biases() == net.network.biases());
  CHECK(back.mask == net.mask);
  CHECK(back.semantics == Semantics::sparsified);
  CHECK(back.network.seed() == 11);
  std::filesystem::remove(path);
  CHECK_THROWS(checkpoint_from_json(nlohmann::json{{"format", "other"}}));
}
