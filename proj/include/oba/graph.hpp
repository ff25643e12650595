#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oba/tensor.hpp"

namespace oba {

enum class LayerKind {
  Linear,
  Conv2d,
  ReLU,
  Softmax,
  MatMul,
  Add,
  Flatten,
  AvgPool,
  MaxPool,
  Scale,
  LayerNorm,
  CrossEntropyLoss,
  // Loss sinks used by the exactness constructions and regression checks.
  LinearLoss,
  SquaredErrorLoss,
};

std::string_view kind_name(LayerKind kind);
LayerKind parse_kind(std::string_view name);
bool is_parameter_kind(LayerKind kind);
bool is_loss_kind(LayerKind kind);

struct LayerAttrs {
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t kernel = 0;  // pooling window; conv kernels come from the weight
  double scale = 1.0;
  bool transpose_right = false;  // MatMul computes left * right^T
  double eps = 1e-5;             // LayerNorm variance floor
};

/// Id used in `inputs` to refer to the network input tensor.
inline constexpr std::string_view kInputId = "input";

struct LayerNode {
  std::string id;
  LayerKind kind = LayerKind::ReLU;
  LayerAttrs attrs;
  /// Parameter tensors; shape {0} when absent.
  Tensor weight = Tensor(Shape{0});
  Tensor bias = Tensor(Shape{0});
  /// Producer ids in slot order.
  std::vector<std::string> inputs;

  // Filled in by NetworkGraph (per-sample shapes, no batch axis).
  std::vector<Shape> in_shapes;
  Shape out_shape;

  bool has_params() const { return is_parameter_kind(kind); }
  bool has_bias() const { return bias.size() > 0; }
  std::size_t param_count() const { return weight.size() + bias.size(); }
};

/// Validated layer DAG with a single input tensor and a single scalar loss sink.
///
/// Nodes are stored in deterministic topological order (Kahn's algorithm with
/// ties broken by id). The structure is fixed after construction; only
/// parameter values may be updated in place.
class NetworkGraph {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  NetworkGraph() = default;
  NetworkGraph(Shape input_shape, std::vector<LayerNode> nodes, std::string loss_id);

  const Shape& input_shape() const { return input_shape_; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<LayerNode>& nodes() const { return nodes_; }
  const LayerNode& node(std::size_t i) const { return nodes_.at(i); }
  const LayerNode& node(std::string_view id) const { return nodes_.at(index_of(id)); }

  Tensor& weight(std::size_t i) { return nodes_.at(i).weight; }
  Tensor& bias(std::size_t i) { return nodes_.at(i).bias; }

  std::size_t index_of(std::string_view id) const;
  std::optional<std::size_t> find(std::string_view id) const;
  std::size_t loss_index() const { return loss_index_; }

  /// Producer index per input slot; npos marks the network input.
  const std::vector<std::size_t>& producers(std::size_t i) const { return producers_.at(i); }
  /// Consumer indices (with multiplicity if a node reads the same producer twice).
  const std::vector<std::size_t>& consumers(std::size_t i) const { return consumers_.at(i); }

  std::vector<std::size_t> parameter_layers() const;
  std::size_t parameter_count() const;

  /// FNV-1a digest of the structure and parameter shapes (not values).
  std::string structure_hash() const;

 private:
  Shape input_shape_;
  std::vector<LayerNode> nodes_;
  std::vector<std::vector<std::size_t>> producers_;
  std::vector<std::vector<std::size_t>> consumers_;
  std::size_t loss_index_ = npos;
};

/// Per-sample output shape of a node given its per-sample input shapes.
Shape infer_output_shape(const LayerNode& node, const std::vector<Shape>& in_shapes);

}  // namespace oba
