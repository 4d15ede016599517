#pragma once

// Network definitions, Kaiming initialization and the masked-parameter view.
//
// All prunable weights of a network live in one flat vector theta of length m,
// ordered by layer (construction order) and row-major within each layer. Biases
// are stored separately and are never masked.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pai/tensor.hpp"

namespace pai {

struct Batch {
  Tensor inputs;  // (n, feature...)
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

using Mask = std::vector<std::uint8_t>;

Mask full_mask(std::size_t m);
std::size_t mask_count(const Mask& mask);
std::vector<std::size_t> mask_support(const Mask& mask);
// theta * mask
std::vector<double> apply_mask(std::span<const double> theta, const Mask& mask);
// Bit-packed, LSB-first hex encoding used by every on-disk mask.
std::string mask_to_hex(const Mask& mask);
Mask mask_from_hex(const std::string& hex, std::size_t m);

// Pruned: removed weights take no part in forward or backward, so their gradient
// is exactly zero. Sparsified: removed weights are set to zero but still receive
// the gradient of the loss with respect to the effective weight.
enum class Semantics { pruned, sparsified };

std::string_view to_string(Semantics s);
Semantics semantics_from_string(std::string_view s);

enum class LayerKind { dense, conv2d };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  // Dense: input/output features. Conv: input/output channels.
  std::size_t fan_in = 1;
  std::size_t fan_out = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool has_bias = true;

  static LayerSpec dense(std::size_t in, std::size_t out, bool bias = true);
  static LayerSpec conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                        std::size_t padding = 0, bool bias = true);

  std::size_t weight_count() const;
  // Number of inputs feeding one output unit; drives the Kaiming std.
  std::size_t init_fan_in() const;
  Shape weight_shape() const;
};

struct Architecture {
  Shape input_shape;  // per-example feature shape, e.g. {2} or {1, 28, 28}
  std::vector<LayerSpec> layers;

  static Architecture mlp(const std::vector<std::size_t>& widths, bool bias = true);

  // Throws std::invalid_argument if layer shapes do not chain.
  void validate() const;
  std::size_t num_weights() const;
  std::size_t num_classes() const;
  std::string describe() const;
};

nlohmann::json to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Anything with a flat vector of prunable weights and a differentiable loss.
class PrunableModel {
 public:
  virtual ~PrunableModel() = default;

  virtual std::size_t num_weights() const = 0;
  // The weights at initialization (theta).
  virtual std::span<const double> weights() const = 0;
  // Loss on `batch` and its gradient with respect to the effective weights.
  virtual LossGrad loss_and_grad_at(std::span<const double> effective, const Batch& batch) const = 0;
  // Layer boundaries in flat index space ({0, ..., m}).
  virtual std::vector<std::size_t> layer_offsets() const;
};

// Gradient with respect to theta*mask under the given semantics.
LossGrad masked_loss_and_grad(const PrunableModel& model, const Mask& mask, Semantics semantics, const Batch& batch);

struct LayerLocation {
  std::size_t layer;
  std::size_t index;  // within-layer, row-major
};

class Network final : public PrunableModel {
 public:
  Network(Architecture arch, std::uint64_t seed, std::vector<double> weights, std::vector<std::vector<double>> biases);

  const Architecture& arch() const { return arch_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t num_weights() const override { return weights_.size(); }
  std::span<const double> weights() const override { return weights_; }
  std::span<double> mutable_weights() { return weights_; }
  const std::vector<std::vector<double>>& biases() const { return biases_; }
  std::vector<std::vector<double>>& mutable_biases() { return biases_; }

  std::vector<std::size_t> layer_offsets() const override { return offsets_; }
  std::size_t num_layers() const { return arch_.layers.size(); }
  LayerLocation locate(std::size_t flat) const;
  std::size_t flat_index(LayerLocation loc) const;

  // Logits for `inputs` (n, input_shape...) using the given effective weights.
  Tensor forward(std::span<const double> effective, const Tensor& inputs) const;

  struct Gradients {
    double loss = 0.0;
    std::vector<double> weights;
    std::vector<std::vector<double>> biases;
  };
  Gradients backprop(std::span<const double> effective, const Batch& batch, bool with_bias_grads) const;

  LossGrad loss_and_grad_at(std::span<const double> effective, const Batch& batch) const override;

 private:
  Var build(Tape& tape, std::span<const double> effective, const Tensor& inputs, bool weight_grads, bool bias_grads,
            std::vector<Var>* weight_vars, std::vector<Var>* bias_vars) const;

  Architecture arch_;
  std::uint64_t seed_;
  std::vector<double> weights_;
  std::vector<std::vector<double>> biases_;
  std::vector<std::size_t> offsets_;
};

struct MaskedNetwork {
  Network network;
  Mask mask;
  Semantics semantics = Semantics::pruned;

  std::size_t num_weights() const { return network.num_weights(); }
  std::size_t kept() const { return mask_count(mask); }
  std::vector<double> effective_weights() const { return apply_mask(network.weights(), mask); }
  void set_mask(Mask m);
};

// Kaiming-normal weights (std sqrt(2 / fan_in)) from a seeded generator, zero
// biases, all-ones mask, pruned semantics.
MaskedNetwork build_network(const Architecture& arch, std::uint64_t seed);

Tensor masked_forward(const MaskedNetwork& net, const Tensor& inputs);
LossGrad loss_and_grad(const MaskedNetwork& net, const Batch& batch);

// JSON checkpoint {arch, seed, theta, biases, mask, semantics}; doubles and
// mask bits round-trip exactly.
nlohmann::json checkpoint_json(const MaskedNetwork& net);
MaskedNetwork checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const MaskedNetwork& net, const std::filesystem::path& path);
MaskedNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace pai
