#pragma once

#include <string>
#include <vector>

#include "oba/graph.hpp"
#include "oba/tensor.hpp"

namespace oba {

/// Weight and bias companions of one node (gradients, tangents, scores).
struct LayerParams {
  Tensor weight = Tensor(Shape{0});
  Tensor bias = Tensor(Shape{0});
};

/// One LayerParams per graph node, aligned with NetworkGraph::nodes().
/// Nonparameter nodes carry empty tensors.
using ParamTensors = std::vector<LayerParams>;

/// Zero tensors shaped like every node's parameters.
ParamTensors zeros_like_params(const NetworkGraph& g);
/// Copy of the graph's current parameter values.
ParamTensors params_of(const NetworkGraph& g);
void set_params(NetworkGraph& g, const ParamTensors& p);

/// a += s * b over all entries.
void params_axpy(double s, const ParamTensors& b, ParamTensors& a);
ParamTensors params_scaled(const ParamTensors& a, double s);
double params_dot(const ParamTensors& a, const ParamTensors& b);
double params_norm2(const ParamTensors& a);
std::vector<double> params_flatten(const ParamTensors& a);

/// Perturbation direction for the Taylor expansion.
struct DeltaRule {
  enum class Kind { ParamItself, Custom };
  Kind kind = Kind::ParamItself;
  ParamTensors custom;

  static DeltaRule param_itself() { return {}; }
  static DeltaRule custom_tangents(ParamTensors t) { return {Kind::Custom, std::move(t)}; }

  /// Concrete tangents for `g`; custom tangents must match parameter shapes.
  ParamTensors resolve(const NetworkGraph& g) const;
  std::string name() const { return kind == Kind::ParamItself ? "param" : "custom"; }
};

}  // namespace oba
