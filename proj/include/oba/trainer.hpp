#pragma once

#include <cstdint>
#include <vector>

#include "oba/dataset.hpp"
#include "oba/graph.hpp"
#include "oba/mask.hpp"

namespace oba {

struct TrainConfig {
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  /// Epochs (0-based) at whose start the rate is divided by `lr_drop_factor`.
  std::vector<std::size_t> lr_drop_epochs{18, 24};
  double lr_drop_factor = 10.0;
  std::uint64_t seed = 0;

  /// Drops at 60% and 80% of `epochs`.
  static std::vector<std::size_t> default_drops(std::size_t epochs);
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  bool diverged = false;
};

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

/// SGD with momentum: v = mu v + (grad + lambda theta); theta -= lr v.
/// Unstructured masks are re-applied after every step. On a non-finite loss
/// the parameters from before that step are restored and training stops.
TrainHistory sgd_train(NetworkGraph& g, const Dataset& ds, const TrainConfig& cfg, const PruneMask* mask = nullptr);

/// Argmax accuracy of the loss input and mean per-sample loss.
EvalResult evaluate(const NetworkGraph& g, const Dataset& ds, std::size_t chunk = 256);

}  // namespace oba
