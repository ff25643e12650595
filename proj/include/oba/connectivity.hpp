#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oba/graph.hpp"

namespace oba {

struct PruneMask;

/// Series and parallel relations between parameter layers, by node index.
struct ConnectivityMap {
  /// upper[l] / lower[l]: parameter layers reachable from / reaching layer l.
  /// Empty for nonparameter nodes.
  std::vector<std::vector<std::size_t>> upper;
  std::vector<std::vector<std::size_t>> lower;

  struct Parallel {
    std::size_t matmul = 0;
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
  };
  std::vector<Parallel> parallel;
};

ConnectivityMap series_sets(const NetworkGraph& g);
/// Throws GraphError when a parameter layer reaches both sides of one MatMul.
ConnectivityMap parallel_sets(const NetworkGraph& g);
ConnectivityMap connectivity(const NetworkGraph& g);

/// Rejects graphs the scoring formulas do not cover (shared parameters
/// reaching both MatMul operands).
void require_supported(const NetworkGraph& g);

/// Parameter layers with a directed path to node `target` (including
/// `target` itself when it is a parameter layer).
std::vector<std::size_t> parameter_ancestors(const NetworkGraph& g, std::size_t target);

struct GroupMember {
  std::size_t node = 0;
  /// Producer: the neuron's output row (weight axis 0, plus bias entry).
  /// Consumer: the weight axis-1 indices fed by the neuron.
  std::vector<std::vector<std::size_t>> indices;
};

struct GroupSpec {
  std::size_t id = 0;
  std::size_t neurons = 0;
  std::vector<GroupMember> producers;
  std::vector<GroupMember> consumers;
};

struct ParamEntry {
  std::size_t node = 0;
  bool bias = false;
  std::size_t index = 0;
};

/// Dependency groups in deterministic order (by first producer).
std::vector<GroupSpec> discover_groups(const NetworkGraph& g);

/// Every parameter entry removed together with neuron `j` of `group`.
std::vector<ParamEntry> neuron_entries(const NetworkGraph& g, const GroupSpec& group, std::size_t j);

struct FlopCount {
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
};

FlopCount count_flops(const NetworkGraph& g, const PruneMask* mask = nullptr);

}  // namespace oba
