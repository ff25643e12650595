#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oba/dataset.hpp"
#include "oba/pruning.hpp"

namespace oba {

enum class SpearmanScope { PerLayer, AllLayers };

std::string_view scope_name(SpearmanScope s);

/// 1-based ranks; tied values share their average rank.
std::vector<double> average_ranks(const std::vector<double>& v);
/// Pearson correlation of average ranks; nullopt when either side is constant.
std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b);

/// loss(neuron j of `layer` masked) - loss(unmasked), one entry per output
/// neuron of the layer, on one fixed evaluation batch.
std::vector<double> masking_ground_truth(const NetworkGraph& g, const Batch& eval, std::size_t layer);

struct SpearmanRow {
  std::string layer;
  std::size_t neuron = 0;
  double score = 0.0;
  double ground_truth = 0.0;
};

struct SpearmanResult {
  std::vector<std::string> layers;
  std::vector<std::optional<double>> per_layer;
  /// Mean of the defined per-layer values.
  std::optional<double> per_layer_mean;
  std::optional<double> all_layers;
  std::vector<SpearmanRow> rows;

  std::optional<double> value(SpearmanScope s) const {
    return s == SpearmanScope::PerLayer ? per_layer_mean : all_layers;
  }
};

/// Producer layers of the discovered groups, in group order.
std::vector<std::size_t> prunable_layers(const NetworkGraph& g);

/// Correlation of estimated neuron scores (gathered per group, read off at
/// each listed producer layer) against masking ground truth. The all-layers
/// scope normalizes each layer's estimates before concatenating.
SpearmanResult spearman_eval(const NetworkGraph& g, const Batch& eval, const std::vector<std::size_t>& layers,
                             const NeuronScores& scores, Normalization normalization);

}  // namespace oba
