#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pai/nn.hpp"

namespace pai {

Mask full_mask(std::size_t m) { return Mask(m, 1); }

std::size_t mask_count(const Mask& mask) {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; }));
}

std::vector<std::size_t> mask_support(const Mask& mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(i);
  }
  return out;
}

std::vector<double> apply_mask(std::span<const double> theta, const Mask& mask) {
  if (theta.size() != mask.size()) {
    throw std::invalid_argument("apply_mask: mask has " + std::to_string(mask.size()) + " entries, theta has " +
                                std::to_string(theta.size()));
  }
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) out[i] = mask[i] ? theta[i] : 0.0;
  return out;
}

std::string mask_to_hex(const Mask& mask) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve((mask.size() + 7) / 8 * 2);
  for (std::size_t byte = 0; byte * 8 < mask.size(); ++byte) {
    unsigned v = 0;
    for (std::size_t bit = 0; bit < 8 && byte * 8 + bit < mask.size(); ++bit) {
      if (mask[byte * 8 + bit]) v |= 1u << bit;
    }
    out.push_back(kDigits[v >> 4]);
    out.push_back(kDigits[v & 15]);
  }
  return out;
}

Mask mask_from_hex(const std::string& hex, std::size_t m) {
  if (hex.size() != (m + 7) / 8 * 2) {
    throw std::invalid_argument("mask_from_hex: expected " + std::to_string((m + 7) / 8 * 2) + " hex digits for " +
                                std::to_string(m) + " bits, got " + std::to_string(hex.size()));
  }
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
    throw std::invalid_argument("mask_from_hex: invalid hex digit");
  };
  Mask mask(m, 0);
  for (std::size_t byte = 0; byte * 2 < hex.size(); ++byte) {
    const unsigned v = nibble(hex[2 * byte]) << 4 | nibble(hex[2 * byte + 1]);
    for (std::size_t bit = 0; bit < 8; ++bit) {
      const std::size_t i = byte * 8 + bit;
      if (i < m) {
        mask[i] = (v >> bit) & 1u;
      } else if ((v >> bit) & 1u) {
        throw std::invalid_argument("mask_from_hex: padding bits set");
      }
    }
  }
  return mask;
}

std::string_view to_string(Semantics s) { return s == Semantics::pruned ? "pruned" : "sparsified"; }

Semantics semantics_from_string(std::string_view s) {
  if (s == "pruned") return Semantics::pruned;
  if (s == "sparsified") return Semantics::sparsified;
  throw std::invalid_argument("unknown semantics '" + std::string(s) + "'");
}

// --- architecture -------------------------------------------------------------

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.fan_in = in;
  s.fan_out = out;
  s.has_bias = bias;
  return s;
}

LayerSpec LayerSpec::conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                          std::size_t padding, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.fan_in = in_channels;
  s.fan_out = out_channels;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  s.has_bias = bias;
  return s;
}

std::size_t LayerSpec::weight_count() const { return shape_numel(weight_shape()); }

std::size_t LayerSpec::init_fan_in() const { return kind == LayerKind::dense ? fan_in : fan_in * kernel * kernel; }

Shape LayerSpec::weight_shape() const {
  if (kind == LayerKind::dense) return {fan_out, fan_in};
  return {fan_out, fan_in, kernel, kernel};
}

Architecture Architecture::mlp(const std::vector<std::size_t>& widths, bool bias) {
  if (widths.size() < 2) throw std::invalid_argument("Architecture::mlp: need at least input and output widths");
  Architecture a;
  a.input_shape = {widths.front()};
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) a.layers.push_back(LayerSpec::dense(widths[i], widths[i + 1], bias));
  return a;
}

void Architecture::validate() const {
  if (input_shape.empty() || shape_numel(input_shape) == 0) {
    throw std::invalid_argument("Architecture: empty input shape");
  }
  if (layers.empty()) throw std::invalid_argument("Architecture: no layers");
  Shape cur = input_shape;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& s = layers[l];
    const std::string where = "Architecture: layer " + std::to_string(l);
    if (s.fan_in < 1 || s.fan_out < 1) throw std::invalid_argument(where + ": fan_in and fan_out must be >= 1");
    if (s.kind == LayerKind::dense) {
      if (shape_numel(cur) != s.fan_in) {
        throw std::invalid_argument(where + " (dense) expects " + std::to_string(s.fan_in) + " inputs, previous output is " +
                                    shape_str(cur));
      }
      cur = {s.fan_out};
    } else {
      if (cur.size() != 3 || cur[0] != s.fan_in) {
        throw std::invalid_argument(where + " (conv2d) expects (" + std::to_string(s.fan_in) +
                                    ",h,w) input, previous output is " + shape_str(cur));
      }
      if (s.kernel < 1 || s.stride < 1) throw std::invalid_argument(where + ": kernel and stride must be >= 1");
      if (cur[1] + 2 * s.padding < s.kernel || cur[2] + 2 * s.padding < s.kernel) {
        throw std::invalid_argument(where + ": kernel larger than padded input " + shape_str(cur));
      }
      cur = {s.fan_out, (cur[1] + 2 * s.padding - s.kernel) / s.stride + 1,
             (cur[2] + 2 * s.padding - s.kernel) / s.stride + 1};
    }
  }
  if (cur.size() != 1) throw std::invalid_argument("Architecture: last layer must be dense");
}

std::size_t Architecture::num_weights() const {
  std::size_t m = 0;
  for (const auto& l : layers) m += l.weight_count();
  return m;
}

std::size_t Architecture::num_classes() const { return layers.empty() ? 0 : layers.back().fan_out; }

std::string Architecture::describe() const {
  std::ostringstream os;
  os << shape_str(input_shape);
  for (const auto& l : layers) {
    if (l.kind == LayerKind::dense) {
      os << "-fc" << l.fan_out;
    } else {
      os << "-conv" << l.fan_out << 'k' << l.kernel;
    }
  }
  return os.str();
}

nlohmann::json to_json(const Architecture& arch) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : arch.layers) {
    nlohmann::json j{{"kind", l.kind == LayerKind::dense ? "dense" : "conv2d"},
                     {"fan_in", l.fan_in},
                     {"fan_out", l.fan_out},
                     {"has_bias", l.has_bias}};
    if (l.kind == LayerKind::conv2d) {
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      j["padding"] = l.padding;
    }
    layers.push_back(std::move(j));
  }
  return {{"input_shape", arch.input_shape}, {"layers", layers}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
  Architecture a;
  if (j.contains("mlp")) {
    a = Architecture::mlp(j.at("mlp").get<std::vector<std::size_t>>(), j.value("has_bias", true));
  } else {
    a.input_shape = j.at("input_shape").get<Shape>();
    for (const auto& lj : j.at("layers")) {
      const std::string kind = lj.at("kind").get<std::string>();
      if (kind == "dense") {
        a.layers.push_back(LayerSpec::dense(lj.at("fan_in"), lj.at("fan_out"), lj.value("has_bias", true)));
      } else if (kind == "conv2d") {
        a.layers.push_back(LayerSpec::conv(lj.at("fan_in"), lj.at("fan_out"), lj.at("kernel"), lj.value("stride", 1),
                                           lj.value("padding", 0), lj.value("has_bias", true)));
      } else {
        throw std::invalid_argument("architecture: unknown layer kind '" + kind + "'");
      }
    }
  }
  a.validate();
  return a;
}

// --- models ---------------------------------------------------------------------

std::vector<std::size_t> PrunableModel::layer_offsets() const { return {0, num_weights()}; }

LossGrad masked_loss_and_grad(const PrunableModel& model, const Mask& mask, Semantics semantics, const Batch& batch) {
  const std::vector<double> effective = apply_mask(model.weights(), mask);
  LossGrad lg = model.loss_and_grad_at(effective, batch);
  if (semantics == Semantics::pruned) {
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) lg.grad[i] = 0.0;
    }
  }
  return lg;
}

Network::Network(Architecture arch, std::uint64_t seed, std::vector<double> weights,
                 std::vector<std::vector<double>> biases)
    : arch_(std::move(arch)), seed_(seed), weights_(std::move(weights)), biases_(std::move(biases)) {
  arch_.validate();
  offsets_.push_back(0);
  for (const auto& l : arch_.layers) offsets_.push_back(offsets_.back() + l.weight_count());
  if (weights_.size() != offsets_.back()) {
    throw std::invalid_argument("Network: expected " + std::to_string(offsets_.back()) + " weights, got " +
                                std::to_string(weights_.size()));
  }
  if (biases_.size() != arch_.layers.size()) throw std::invalid_argument("Network: one bias vector per layer required");
  for (std::size_t l = 0; l < biases_.size(); ++l) {
    const std::size_t want = arch_.layers[l].has_bias ? arch_.layers[l].fan_out : 0;
    if (biases_[l].size() != want) {
      throw std::invalid_argument("Network: layer " + std::to_string(l) + " bias has " +
                                  std::to_string(biases_[l].size()) + " entries, expected " + std::to_string(want));
    }
  }
}

LayerLocation Network::locate(std::size_t flat) const {
  if (flat >= weights_.size()) throw std::out_of_range("Network::locate: index " + std::to_string(flat));
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), flat);
  const auto layer = static_cast<std::size_t>(it - offsets_.begin()) - 1;
  return {layer, flat - offsets_[layer]};
}

std::size_t Network::flat_index(LayerLocation loc) const {
  if (loc.layer >= num_layers() || loc.index >= arch_.layers[loc.layer].weight_count()) {
    throw std::out_of_range("Network::flat_index: location outside the network");
  }
  return offsets_[loc.layer] + loc.index;
}

Var Network::build(Tape& tape, std::span<const double> effective, const Tensor& inputs, bool weight_grads,
                   bool bias_grads, std::vector<Var>* weight_vars, std::vector<Var>* bias_vars) const {
  if (effective.size() != weights_.size()) {
    throw std::invalid_argument("Network: effective weights have " + std::to_string(effective.size()) +
                                " entries, expected " + std::to_string(weights_.size()));
  }
  Shape want{0};
  want.insert(want.end(), arch_.input_shape.begin(), arch_.input_shape.end());
  want[0] = inputs.shape.empty() ? 0 : inputs.shape[0];
  if (inputs.shape != want) {
    throw std::invalid_argument("Network: inputs have shape " + shape_str(inputs.shape) + ", expected (n," +
                                shape_str(arch_.input_shape).substr(1));
  }
  Var x = tape.constant(inputs);
  for (std::size_t l = 0; l < arch_.layers.size(); ++l) {
    const LayerSpec& spec = arch_.layers[l];
    Tensor w(spec.weight_shape(), std::vector<double>(effective.begin() + static_cast<std::ptrdiff_t>(offsets_[l]),
                                                      effective.begin() + static_cast<std::ptrdiff_t>(offsets_[l + 1])));
    Var wv = weight_grads ? tape.parameter(std::move(w)) : tape.constant(std::move(w));
    if (weight_vars) weight_vars->push_back(wv);
    if (spec.kind == LayerKind::dense) {
      if (x.shape().size() != 2) x = flatten(x);
      x = linear(x, wv);
    } else {
      x = conv2d(x, wv, Conv2dParams{spec.stride, spec.padding});
    }
    if (spec.has_bias) {
      Tensor b({spec.fan_out}, biases_[l]);
      Var bv = bias_grads ? tape.parameter(std::move(b)) : tape.constant(std::move(b));
      if (bias_vars) bias_vars->push_back(bv);
      x = add_bias(x, bv);
    } else if (bias_vars) {
      bias_vars->push_back(Var{});
    }
    if (l + 1 < arch_.layers.size()) x = relu(x);
  }
  return x;
}

Tensor Network::forward(std::span<const double> effective, const Tensor& inputs) const {
  Tape tape;
  Var logits = build(tape, effective, inputs, false, false, nullptr, nullptr);
  Tensor out = logits.value();
  out.requires_grad = false;
  return out;
}

Network::Gradients Network::backprop(std::span<const double> effective, const Batch& batch, bool with_bias_grads) const {
  Tape tape;
  std::vector<Var> wv;
  std::vector<Var> bv;
  Var logits = build(tape, effective, batch.inputs, true, with_bias_grads, &wv, &bv);
  Var loss = softmax_cross_entropy(logits, batch.labels);
  tape.backward(loss);
  Gradients g;
  g.loss = loss.value().item();
  g.weights.reserve(weights_.size());
  for (Var v : wv) {
    auto gr = v.grad();
    g.weights.insert(g.weights.end(), gr.begin(), gr.end());
  }
  if (with_bias_grads) {
    for (Var v : bv) {
      if (v.valid()) {
        auto gr = v.grad();
        g.biases.emplace_back(gr.begin(), gr.end());
      } else {
        g.biases.emplace_back();
      }
    }
  }
  return g;
}

LossGrad Network::loss_and_grad_at(std::span<const double> effective, const Batch& batch) const {
  Gradients g = backprop(effective, batch, false);
  return {g.loss, std::move(g.weights)};
}

void MaskedNetwork::set_mask(Mask m) {
  if (m.size() != network.num_weights()) {
    throw std::invalid_argument("MaskedNetwork::set_mask: mask has " + std::to_string(m.size()) + " entries, network has " +
                                std::to_string(network.num_weights()) + " weights");
  }
  for (auto& b : m) b = b ? 1 : 0;
  mask = std::move(m);
}

MaskedNetwork build_network(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  std::vector<double> weights;
  weights.reserve(arch.num_weights());
  std::vector<std::vector<double>> biases;
  for (const auto& l : arch.layers) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(l.init_fan_in())));
    for (std::size_t i = 0; i < l.weight_count(); ++i) weights.push_back(dist(rng));
    biases.emplace_back(l.has_bias ? l.fan_out : 0, 0.0);
  }
  const std::size_t m = weights.size();
  return MaskedNetwork{Network(arch, seed, std::move(weights), std::move(biases)), full_mask(m), Semantics::pruned};
}

Tensor masked_forward(const MaskedNetwork& net, const Tensor& inputs) {
  return net.network.forward(net.effective_weights(), inputs);
}

LossGrad loss_and_grad(const MaskedNetwork& net, const Batch& batch) {
  return masked_loss_and_grad(net.network, net.mask, net.semantics, batch);
}

// --- checkpoints ------------------------------------------------------------------

nlohmann::json checkpoint_json(const MaskedNetwork& net) {
  const Network& n = net.network;
  return {{"format", "pai-network"},
          {"version", 1},
          {"arch", to_json(n.arch())},
          {"seed", n.seed()},
          {"semantics", std::string(to_string(net.semantics))},
          {"theta", std::vector<double>(n.weights().begin(), n.weights().end())},
          {"biases", n.biases()},
          {"m", n.num_weights()},
          {"mask", mask_to_hex(net.mask)}};
}

MaskedNetwork checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "pai-network") throw std::invalid_argument("checkpoint: not a pai-network record");
  if (j.value("version", 0) != 1) throw std::invalid_argument("checkpoint: unsupported version");
  Architecture arch = architecture_from_json(j.at("arch"));
  Network n(std::move(arch), j.at("seed").get<std::uint64_t>(), j.at("theta").get<std::vector<double>>(),
            j.at("biases").get<std::vector<std::vector<double>>>());
  const std::size_t m = j.at("m").get<std::size_t>();
  if (m != n.num_weights()) throw std::invalid_argument("checkpoint: m does not match theta");
  Mask mask = mask_from_hex(j.at("mask").get<std::string>(), m);
  return MaskedNetwork{std::move(n), std::move(mask), semantics_from_string(j.at("semantics").get<std::string>())};
}

}  // namespace pai
