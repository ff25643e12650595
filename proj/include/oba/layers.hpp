#pragma once

#include <span>
#include <vector>

#include "oba/graph.hpp"
#include "oba/params.hpp"
#include "oba/tensor.hpp"

namespace oba {

/// Primal values of one node for one batch. All tensors carry the batch axis
/// first except the loss output, which is a scalar.
struct LayerPrimal {
  std::vector<Tensor> inputs;
  Tensor output;
  /// MaxPool: flat batched-input index of the selected element per output entry.
  std::vector<std::size_t> argmax;
  /// Softmax and cross entropy: probabilities. LayerNorm: normalized input.
  Tensor aux = Tensor(Shape{0});
  /// LayerNorm: reciprocal standard deviation per normalized row.
  Tensor rstd = Tensor(Shape{0});
  /// Loss nodes: the batch targets.
  Tensor targets = Tensor(Shape{0});
};

struct LayerVjp {
  std::vector<Tensor> inputs;
  LayerParams params;
};

/// Axis of the per-sample shape that indexes neurons/channels: 0 for
/// [C, H, W] activations, the last axis otherwise.
std::size_t feature_axis(const Shape& per_sample);

LayerPrimal layer_forward(const LayerNode& node, std::vector<Tensor> inputs, const Tensor* targets = nullptr);

/// Reverse-mode product: upstream cotangent on the output to cotangents on
/// every input slot and on the node's parameters.
LayerVjp layer_vjp(const LayerNode& node, const LayerPrimal& primal, const Tensor& upstream);

/// Forward-mode product of the surrogate layer map
///   parameter layers:    (dy/dtheta) dtheta + (dy/dx) xdot
///   nonparameter layers: (dy/dx) xdot
/// `theta_tangent` may be null for parameter layers (treated as zero) and must
/// be null otherwise. Kinds whose derivative depends on the primal (ReLU mask,
/// softmax probabilities, max-pool argmax) require those fields in `primal`.
Tensor layer_jvp(const LayerNode& node, const LayerPrimal& primal, std::span<const Tensor> x_tangents,
                 const LayerParams* theta_tangent);

/// upstream * J_dW: VJP of the layer's input map with `surrogate` in place of
/// the weights. Biases do not enter.
Tensor vjp_with_surrogate_weights(const LayerNode& node, const LayerPrimal& primal, const Tensor& upstream,
                                  const Tensor& surrogate);

/// upstream * (dy/dw) evaluated with the input tangent in place of the input,
/// i.e. the mixed derivative d2y/(dw dx) contracted with `x_tangent`.
Tensor weight_grad_at_input_tangent(const LayerNode& node, const LayerPrimal& primal, const Tensor& x_tangent,
                                    const Tensor& upstream);

}  // namespace oba
