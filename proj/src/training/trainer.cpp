#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "pai/csv.hpp"
#include "pai/training.hpp"

namespace pai {

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("TrainConfig: momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (!(lr_drop_factor > 0.0)) throw std::invalid_argument("TrainConfig: lr_drop_factor must be > 0");
  for (std::size_t e : lr_drop_epochs) {
    if (e >= epochs && epochs > 0) {
      throw std::invalid_argument("TrainConfig: drop epoch " + std::to_string(e) + " is past the last epoch");
    }
  }
}

std::vector<std::size_t> TrainConfig::drop_epochs() const {
  if (!lr_drop_epochs.empty()) return lr_drop_epochs;
  return {epochs / 2, epochs * 3 / 4};
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
  double lr = learning_rate;
  for (std::size_t e : drop_epochs()) {
    if (epoch >= e && e > 0) lr *= lr_drop_factor;
  }
  return lr;
}

double evaluate(const MaskedNetwork& net, const Dataset& split) {
  if (split.size() == 0) throw std::invalid_argument("evaluate: empty split");
  const std::vector<double> effective = net.effective_weights();
  const std::size_t chunk = 512;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < split.size(); start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(split.size(), start + chunk); ++i) idx.push_back(i);
    const Batch b = split.gather(idx);
    const Tensor logits = net.network.forward(effective, b.inputs);
    const std::size_t classes = logits.shape[1];
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double* row = logits.data.data() + i * classes;
      const auto best = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
      if (static_cast<int>(best) == b.labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

double max_pruned_magnitude(const MaskedNetwork& net) {
  double worst = 0.0;
  const auto w = net.network.weights();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!net.mask[i]) worst = std::max(worst, std::abs(w[i]));
  }
  return worst;
}

TrainReport train(MaskedNetwork& net, const DatasetSplits& data, const TrainConfig& cfg) {
  cfg.validate();
  data.train.validate();
  Network& model = net.network;
  const Mask& mask = net.mask;
  const std::size_t m = model.num_weights();
  if (mask.size() != m) throw std::invalid_argument("train: mask does not match the network");

  std::span<double> w = model.mutable_weights();
  for (std::size_t i = 0; i < m; ++i) {
    if (!mask[i]) w[i] = 0.0;
  }
  std::vector<double> w_mom(m, 0.0);
  auto& biases = model.mutable_biases();
  std::vector<std::vector<double>> b_mom;
  for (const auto& b : biases) b_mom.emplace_back(b.size(), 0.0);

  TrainReport report;
  const std::size_t batch = std::min(cfg.batch_size, data.train.size());
  BatchSampler sampler(data.train, batch, cfg.seed);
  const double mu = cfg.momentum;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate_at(epoch);
    double loss_sum = 0.0;
    const std::size_t steps = sampler.batches_per_epoch();
    for (std::size_t step = 0; step < steps; ++step) {
      const Batch b = sampler.next();
      Network::Gradients g;
      try {
        g = model.backprop(model.weights(), b, true);
      } catch (const std::domain_error&) {
        g.loss = std::numeric_limits<double>::quiet_NaN();  // the forward pass overflowed
      }
      if (!std::isfinite(g.loss)) {
        report.diverged = true;
        break;
      }
      loss_sum += g.loss;
      for (std::size_t i = 0; i < m; ++i) {
        if (!mask[i]) continue;  // removed: weight, gradient and momentum stay 0
        const double gi = g.weights[i] + cfg.weight_decay * w[i];
        w_mom[i] = mu * w_mom[i] + gi;
        w[i] -= lr * w_mom[i];
      }
      for (std::size_t l = 0; l < biases.size(); ++l) {
        for (std::size_t j = 0; j < biases[l].size(); ++j) {
          b_mom[l][j] = mu * b_mom[l][j] + g.biases[l][j];
          biases[l][j] -= lr * b_mom[l][j];
        }
      }
    }
    bool finite = !report.diverged;
    for (std::size_t i = 0; finite && i < m; ++i) finite = std::isfinite(w[i]);
    if (!finite) {
      report.diverged = true;
      break;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
    rec.val_accuracy = data.val.size() ? evaluate(net, data.val) : 0.0;
    report.epochs.push_back(rec);
  }
  report.max_pruned_magnitude = max_pruned_magnitude(net);
  if (!report.diverged && data.test.size()) report.test_accuracy = evaluate(net, data.test);
  return report;
}

void write_train_report_csv(std::ostream& out, const TrainReport& report) {
  csv::write_row(out, {"epoch", "train_loss", "val_accuracy"});
  for (const auto& e : report.epochs) {
    csv::write_row(out, {csv::num(e.epoch), csv::num(e.train_loss), csv::num(e.val_accuracy)});
  }
  csv::write_row(out, {"test", csv::num(report.test_accuracy), csv::num(report.max_pruned_magnitude)});
}

}  // namespace pai
