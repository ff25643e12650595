#include "oba/graph.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "oba/errors.hpp"
#include "oba/hash.hpp"

namespace oba {

namespace {

struct KindEntry {
  LayerKind kind;
  std::string_view name;
};

constexpr KindEntry kKinds[] = {
    {LayerKind::Linear, "Linear"},
    {LayerKind::Conv2d, "Conv2d"},
    {LayerKind::ReLU, "ReLU"},
    {LayerKind::Softmax, "Softmax"},
    {LayerKind::MatMul, "MatMul"},
    {LayerKind::Add, "Add"},
    {LayerKind::Flatten, "Flatten"},
    {LayerKind::AvgPool, "AvgPool"},
    {LayerKind::MaxPool, "MaxPool"},
    {LayerKind::Scale, "Scale"},
    {LayerKind::LayerNorm, "LayerNorm"},
    {LayerKind::CrossEntropyLoss, "CrossEntropyLoss"},
    {LayerKind::LinearLoss, "LinearLoss"},
    {LayerKind::SquaredErrorLoss, "SquaredErrorLoss"},
};

[[noreturn]] void shape_error(const LayerNode& node, const std::string& what) {
  throw GraphError("node '" + node.id + "' (" + std::string(kind_name(node.kind)) + "): " + what);
}

}  // namespace

std::string_view kind_name(LayerKind kind) {
  for (const auto& e : kKinds)
    if (e.kind == kind) return e.name;
  return "?";
}

LayerKind parse_kind(std::string_view name) {
  for (const auto& e : kKinds)
    if (e.name == name) return e.kind;
  throw GraphError("unknown layer kind '" + std::string(name) + "'");
}

bool is_parameter_kind(LayerKind kind) {
  return kind == LayerKind::Linear || kind == LayerKind::Conv2d || kind == LayerKind::LayerNorm;
}

bool is_loss_kind(LayerKind kind) {
  return kind == LayerKind::CrossEntropyLoss || kind == LayerKind::LinearLoss ||
         kind == LayerKind::SquaredErrorLoss;
}

Shape infer_output_shape(const LayerNode& node, const std::vector<Shape>& in) {
  const auto expect_inputs = [&](std::size_t n) {
    if (in.size() != n) {
      shape_error(node, "expects " + std::to_string(n) + " input(s), has " + std::to_string(in.size()));
    }
  };
  if (!node.has_params() && (node.weight.size() || node.bias.size())) {
    shape_error(node, "nonparameter kind carries parameters");
  }
  switch (node.kind) {
    case LayerKind::Linear: {
      expect_inputs(1);
      const Shape& x = in[0];
      if (node.weight.rank() != 2) shape_error(node, "weight must be [out, in]");
      if (x.empty() || x.size() > 2) shape_error(node, "input must be [in] or [rows, in], got " + shape_to_string(x));
      if (x.back() != node.weight.dim(1)) {
        shape_error(node, "input " + shape_to_string(x) + " does not match weight " +
                              shape_to_string(node.weight.shape()));
      }
      if (node.has_bias() && node.bias.shape() != Shape{node.weight.dim(0)}) shape_error(node, "bias must be [out]");
      Shape y = x;
      y.back() = node.weight.dim(0);
      return y;
    }
    case LayerKind::Conv2d: {
      expect_inputs(1);
      const Shape& x = in[0];
      const Shape& w = node.weight.shape();
      if (w.size() != 4 || w[2] != w[3]) shape_error(node, "weight must be [out, in, k, k]");
      if (x.size() != 3 || x[0] != w[1]) {
        shape_error(node, "input " + shape_to_string(x) + " does not match weight " + shape_to_string(w));
      }
      if (node.has_bias() && node.bias.shape() != Shape{w[0]}) shape_error(node, "bias must be [out]");
      try {
        return {w[0], conv_out_extent(x[1], w[2], node.attrs.stride, node.attrs.pad),
                conv_out_extent(x[2], w[2], node.attrs.stride, node.attrs.pad)};
      } catch (const DimensionError& e) {
        shape_error(node, e.what());
      }
    }
    case LayerKind::ReLU:
    case LayerKind::Scale:
      expect_inputs(1);
      return in[0];
    case LayerKind::Softmax:
      expect_inputs(1);
      if (in[0].empty()) shape_error(node, "softmax needs rank >= 1");
      return in[0];
    case LayerKind::MatMul: {
      expect_inputs(2);
      const Shape& l = in[0];
      const Shape& r = in[1];
      if (l.size() != 2 || r.size() != 2) shape_error(node, "operands must be per-sample matrices");
      const std::size_t r_inner = node.attrs.transpose_right ? r[1] : r[0];
      const std::size_t r_outer = node.attrs.transpose_right ? r[0] : r[1];
      if (l[1] != r_inner) {
        shape_error(node, "cannot multiply " + shape_to_string(l) + " by " + shape_to_string(r) +
                              (node.attrs.transpose_right ? "^T" : ""));
      }
      return {l[0], r_outer};
    }
    case LayerKind::Add:
      if (in.size() < 2) shape_error(node, "needs at least two inputs");
      for (const auto& s : in)
        if (s != in[0]) shape_error(node, "inputs have different shapes " + shape_to_string(in[0]) + " and " + shape_to_string(s));
      return in[0];
    case LayerKind::Flatten:
      expect_inputs(1);
      return {shape_numel(in[0])};
    case LayerKind::AvgPool:
    case LayerKind::MaxPool: {
      expect_inputs(1);
      const Shape& x = in[0];
      if (x.size() != 3) shape_error(node, "pooling expects [C, H, W]");
      if (node.attrs.kernel == 0) shape_error(node, "pooling needs a kernel size");
      try {
        return {x[0], conv_out_extent(x[1], node.attrs.kernel, node.attrs.stride, 0),
                conv_out_extent(x[2], node.attrs.kernel, node.attrs.stride, 0)};
      } catch (const DimensionError& e) {
        shape_error(node, e.what());
      }
    }
    case LayerKind::LayerNorm: {
      expect_inputs(1);
      if (in[0].empty()) shape_error(node, "layer norm needs rank >= 1");
      const Shape d{in[0].back()};
      if (node.weight.shape() != d || node.bias.shape() != d) shape_error(node, "gain and shift must be [features]");
      return in[0];
    }
    case LayerKind::CrossEntropyLoss:
      expect_inputs(1);
      if (in[0].size() != 1) shape_error(node, "cross entropy expects per-sample logits [classes]");
      return {};
    case LayerKind::LinearLoss:
    case LayerKind::SquaredErrorLoss:
      expect_inputs(1);
      return {};
  }
  shape_error(node, "unhandled kind");
}

NetworkGraph::NetworkGraph(Shape input_shape, std::vector<LayerNode> nodes, std::string loss_id)
    : input_shape_(std::move(input_shape)) {
  if (input_shape_.empty()) throw GraphError("network input shape must be nonempty");
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id.empty() || nodes[i].id == kInputId) throw GraphError("invalid node id '" + nodes[i].id + "'");
    if (!by_id.emplace(nodes[i].id, i).second) throw GraphError("duplicate node id '" + nodes[i].id + "'");
  }
  const auto loss_it = by_id.find(loss_id);
  if (loss_it == by_id.end()) throw GraphError("loss node '" + loss_id + "' not found");
  for (const auto& n : nodes) {
    if (is_loss_kind(n.kind) && n.id != loss_id) throw GraphError("extra loss node '" + n.id + "'");
    for (const auto& src : n.inputs)
      if (src != kInputId && !by_id.count(src)) {
        throw GraphError("node '" + n.id + "' reads from unknown node '" + src + "'");
      }
  }
  if (!is_loss_kind(nodes[loss_it->second].kind)) throw GraphError("node '" + loss_id + "' is not a loss kind");

  // Kahn's algorithm, smallest id first.
  std::vector<std::size_t> indegree(nodes.size(), 0);
  std::vector<std::vector<std::size_t>> out_edges(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const auto& src : nodes[i].inputs) {
      if (src == kInputId) continue;
      out_edges[by_id[src]].push_back(i);
      ++indegree[i];
    }
  }
  using Item = std::pair<std::string, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> ready;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (indegree[i] == 0) ready.emplace(nodes[i].id, i);
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    const std::size_t i = ready.top().second;
    ready.pop();
    order.push_back(i);
    for (std::size_t j : out_edges[i])
      if (--indegree[j] == 0) ready.emplace(nodes[j].id, j);
  }
  if (order.size() != nodes.size()) {
    // Walk predecessors among the unsorted nodes until one repeats.
    std::size_t cur = 0;
    while (indegree[cur] == 0) ++cur;
    std::vector<std::size_t> path;
    std::vector<int> seen(nodes.size(), -1);
    while (seen[cur] < 0) {
      seen[cur] = static_cast<int>(path.size());
      path.push_back(cur);
      for (const auto& src : nodes[cur].inputs) {
        if (src == kInputId) continue;
        const std::size_t p = by_id[src];
        if (indegree[p] > 0) {
          cur = p;
          break;
        }
      }
    }
    std::string cycle;
    for (std::size_t k = path.size(); k-- > static_cast<std::size_t>(seen[cur]);) cycle += nodes[path[k]].id + " -> ";
    cycle += nodes[cur].id;
    throw GraphError("graph contains a cycle: " + cycle);
  }

  nodes_.reserve(nodes.size());
  for (std::size_t i : order) nodes_.push_back(std::move(nodes[i]));
  producers_.assign(nodes_.size(), {});
  consumers_.assign(nodes_.size(), {});
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (const auto& src : nodes_[i].inputs) {
      if (src == kInputId) {
        producers_[i].push_back(npos);
      } else {
        const std::size_t p = index_of(src);
        producers_[i].push_back(p);
        consumers_[p].push_back(i);
      }
    }
  }
  loss_index_ = index_of(loss_id);

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    n.in_shapes.clear();
    for (std::size_t p : producers_[i]) n.in_shapes.push_back(p == npos ? input_shape_ : nodes_[p].out_shape);
    n.out_shape = infer_output_shape(n, n.in_shapes);
  }

  // Reachability: from the input forward, and from the loss backward.
  std::vector<bool> from_input(nodes_.size(), false), to_loss(nodes_.size(), false);
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    for (std::size_t p : producers_[i])
      if (p == npos || from_input[p]) from_input[i] = true;
  to_loss[loss_index_] = true;
  for (std::size_t i = nodes_.size(); i-- > 0;)
    for (std::size_t c : consumers_[i])
      if (to_loss[c]) to_loss[i] = true;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].inputs.empty()) throw GraphError("node '" + nodes_[i].id + "' has no inputs");
    if (!from_input[i]) throw GraphError("node '" + nodes_[i].id + "' is not reachable from the input");
    if (!to_loss[i]) throw GraphError("node '" + nodes_[i].id + "' is dangling: the loss does not depend on it");
  }
}

std::optional<std::size_t> NetworkGraph::find(std::string_view id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  return std::nullopt;
}

std::size_t NetworkGraph::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw GraphError("no node with id '" + std::string(id) + "'");
}

std::vector<std::size_t> NetworkGraph::parameter_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].has_params()) out.push_back(i);
  return out;
}

std::size_t NetworkGraph::parameter_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes_) n += node.param_count();
  return n;
}

std::string NetworkGraph::structure_hash() const {
  std::ostringstream s;
  s << "in" << shape_to_string(input_shape_) << ';';
  for (const auto& n : nodes_) {
    s << n.id << ':' << kind_name(n.kind) << ':' << n.attrs.stride << ',' << n.attrs.pad << ',' << n.attrs.kernel
      << ',' << n.attrs.scale << ',' << n.attrs.transpose_right << ',' << n.attrs.eps << ':';
    for (const auto& src : n.inputs) s << src << ',';
    s << shape_to_string(n.weight.shape()) << shape_to_string(n.bias.shape()) << ';';
  }
  return hex64(fnv1a64(s.str()));
}

}  // namespace oba
