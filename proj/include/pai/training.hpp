#pragma once

// SGD with momentum and weight decay on a frozen mask.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "pai/data.hpp"
#include "pai/nn.hpp"

namespace pai {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  // Epochs at which the learning rate is multiplied by lr_drop_factor. Empty
  // means the default 1/2 and 3/4 of `epochs`.
  std::vector<std::size_t> lr_drop_epochs;
  double lr_drop_factor = 0.1;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on non-positive rates or drop epochs past the end.
  void validate() const;
  std::vector<std::size_t> drop_epochs() const;
  double learning_rate_at(std::size_t epoch) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double test_accuracy = 0.0;
  // Largest |theta_i| over removed indices after training; zero by construction.
  double max_pruned_magnitude = 0.0;
  bool diverged = false;
};

// Applies the mask to the network weights, then trains in place. Only the
// supported weights (and all biases) move; removed weights, their gradients and
// momentum buffers stay exactly zero. Weight decay applies to weights only.
TrainReport train(MaskedNetwork& net, const DatasetSplits& data, const TrainConfig& cfg);

// Fraction of examples whose argmax logit (lowest index on ties) equals the label.
double evaluate(const MaskedNetwork& net, const Dataset& split);

// Largest |theta_i| over indices with mask_i == 0.
double max_pruned_magnitude(const MaskedNetwork& net);

void write_train_report_csv(std::ostream& out, const TrainReport& report);

}  // namespace pai
