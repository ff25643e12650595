#pragma once

#include <string>
#include <vector>

#include "oba/autodiff.hpp"
#include "oba/connectivity.hpp"
#include "oba/graph.hpp"

namespace oba {

struct PruneMask {
  enum class Mode { Structured, Unstructured };
  Mode mode = Mode::Structured;
  /// Structured: ascending kept neuron indices per group (discover_groups order).
  std::vector<std::vector<std::size_t>> keep;
  std::vector<std::size_t> group_sizes;
  /// Unstructured: 1 keeps, 0 prunes; one tensor per node, shape {0} where
  /// the node's weight is not masked.
  std::vector<Tensor> weight_masks;
  std::string graph_hash;
  /// Fraction of candidate items pruned (neurons or weights).
  double sparsity = 0.0;
  /// Items pruned.
  std::size_t pruned = 0;
};

std::string_view mode_name(PruneMask::Mode mode);
PruneMask::Mode parse_mode(std::string_view name);

/// Structured mask keeping every neuron.
PruneMask full_structured_mask(const NetworkGraph& g);
/// Unstructured mask keeping every Linear/Conv2d weight.
PruneMask full_unstructured_mask(const NetworkGraph& g);

/// Throws DimensionError when the mask was built for another graph.
void check_mask(const NetworkGraph& g, const PruneMask& mask);

/// Structured: smaller graph with pruned rows, columns and bias entries
/// removed. Unstructured: same graph with masked weights zeroed.
NetworkGraph apply_mask(const NetworkGraph& g, const PruneMask& mask);

/// Gates that zero the producer outputs of every pruned neuron.
OutputGates structured_gates(const NetworkGraph& g, const PruneMask& mask);

/// Zero masked weight entries in place.
void enforce_mask(NetworkGraph& g, const PruneMask& mask);

}  // namespace oba
