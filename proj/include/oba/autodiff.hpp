#pragma once

#include <vector>

#include "oba/graph.hpp"
#include "oba/layers.hpp"
#include "oba/params.hpp"
#include "oba/tensor.hpp"

namespace oba {

/// Per-node multipliers applied to node outputs along the feature axis.
/// An empty entry leaves that node untouched.
struct OutputGates {
  std::vector<std::vector<double>> per_node;
  bool empty() const;
};

struct ForwardCache {
  std::vector<LayerPrimal> nodes;
  std::size_t batch = 0;
  double loss = 0.0;
  std::string graph_hash;
  OutputGates gates;
};

struct GradientRecord {
  ParamTensors params;
  /// Cotangent on every node output; shape {0} where nothing flowed.
  std::vector<Tensor> outputs;
};

struct TangentRecord {
  /// Per node, per input slot.
  std::vector<std::vector<Tensor>> inputs;
  std::vector<Tensor> outputs;
  DeltaRule rule;
};

ForwardCache forward(const NetworkGraph& g, const Tensor& batch, const Tensor& targets,
                     const OutputGates* gates = nullptr);

/// Input of node `i` at slot `s` as seen in the cache.
const Tensor& node_input(const ForwardCache& cache, std::size_t i, std::size_t s);

/// Reverse sweep with arbitrary cotangent seeds on node outputs (shape {0}
/// entries mean no seed) plus, optionally, dL/dL = 1 at the loss sink.
GradientRecord reverse_sweep(const NetworkGraph& g, const ForwardCache& cache, const std::vector<Tensor>& seeds,
                             bool seed_loss);

GradientRecord backward(const NetworkGraph& g, const ForwardCache& cache);

/// Forward-mode sweep with parameter tangents and an optional tangent on the
/// network input (null means zero).
TangentRecord jvp_sweep(const NetworkGraph& g, const ForwardCache& cache, const ParamTensors& theta_tangent,
                        const Tensor* input_tangent = nullptr);

/// X-hat and Y-hat for every node under the perturbation rule.
TangentRecord jvpf_run(const NetworkGraph& g, const ForwardCache& cache, const DeltaRule& rule);

/// Loss only, no cache retained.
double loss_value(const NetworkGraph& g, const Tensor& batch, const Tensor& targets,
                  const OutputGates* gates = nullptr);

}  // namespace oba
