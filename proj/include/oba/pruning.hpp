#pragma once

#include <string>
#include <vector>

#include "oba/connectivity.hpp"
#include "oba/mask.hpp"
#include "oba/scoring.hpp"

namespace oba {

enum class Normalization { None, Standardization, Max, L2 };

std::string_view normalization_name(Normalization n);
Normalization parse_normalization(std::string_view name);

struct NeuronScores {
  /// One score per neuron, per group.
  std::vector<std::vector<double>> groups;
  /// Parameter entries gathered per neuron from consumers (upper) and
  /// producers (lower), per group.
  std::vector<std::size_t> upper_params;
  std::vector<std::size_t> lower_params;
  std::vector<std::string> warnings;
};

/// Sum of raw scores over each neuron's producer rows, bias entries and
/// consumer columns.
NeuronScores gather_neuron_scores(const NetworkGraph& g, const ImportanceTable& table,
                                  const std::vector<GroupSpec>& groups);

/// Per-group rescaling. Standardization maps constant groups to 0; Max and
/// L2 leave all-zero groups unchanged and record a warning. Max divides by
/// the largest magnitude.
NeuronScores normalize_scores(NeuronScores scores, Normalization method);
std::vector<double> normalize_vector(std::vector<double> v, Normalization method, bool* degenerate = nullptr);

/// Prunes the floor(p * N) lowest neurons globally; ties go to the lower
/// (group, neuron). Each group's top neuron is protected, so `pruned` may
/// fall short of the request.
PruneMask rank_and_select(const NetworkGraph& g, const NeuronScores& scores, double p);
PruneMask rank_and_select_count(const NetworkGraph& g, const NeuronScores& scores, std::size_t count);

/// Global selection over Linear/Conv2d weights: the mask grows until
/// floor(sparsity * N) weights are pruned, keeping every entry `previous`
/// already pruned.
PruneMask select_unstructured(const NetworkGraph& g, const ParamTensors& scores, double sparsity,
                              const PruneMask* previous = nullptr);

}  // namespace oba
