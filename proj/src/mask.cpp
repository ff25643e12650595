#include "oba/mask.hpp"

#include <algorithm>

#include "oba/errors.hpp"

namespace oba {

namespace {

bool maskable(const LayerNode& node) { return node.kind == LayerKind::Linear || node.kind == LayerKind::Conv2d; }

/// Keep the listed indices of `axis` (0 or 1) of a tensor laid out [A, B, rest...].
Tensor select_axis(const Tensor& t, std::size_t axis, const std::vector<std::size_t>& keep) {
  Shape s = t.shape();
  const std::size_t a = s[0];
  const std::size_t b = s.size() > 1 ? s[1] : 1;
  const std::size_t inner = t.size() / (a * b);
  s[axis] = keep.size();
  Tensor out(s);
  std::size_t k = 0;
  if (axis == 0) {
    for (std::size_t r : keep)
      for (std::size_t q = 0; q < b * inner; ++q) out[k++] = t[r * b * inner + q];
  } else {
    for (std::size_t r = 0; r < a; ++r)
      for (std::size_t c : keep)
        for (std::size_t q = 0; q < inner; ++q) out[k++] = t[(r * b + c) * inner + q];
  }
  return out;
}

std::vector<std::size_t> complement(std::size_t n, const std::vector<bool>& drop) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i)
    if (!drop[i]) keep.push_back(i);
  return keep;
}

}  // namespace

std::string_view mode_name(PruneMask::Mode mode) {
  return mode == PruneMask::Mode::Structured ? "structured" : "unstructured";
}

PruneMask::Mode parse_mode(std::string_view name) {
  if (name == "structured") return PruneMask::Mode::Structured;
  if (name == "unstructured") return PruneMask::Mode::Unstructured;
  throw ConfigError("unknown pruning mode '" + std::string(name) + "'");
}

PruneMask full_structured_mask(const NetworkGraph& g) {
  PruneMask m;
  m.mode = PruneMask::Mode::Structured;
  m.graph_hash = g.structure_hash();
  for (const auto& grp : discover_groups(g)) {
    std::vector<std::size_t> all(grp.neurons);
    for (std::size_t j = 0; j < grp.neurons; ++j) all[j] = j;
    m.keep.push_back(std::move(all));
    m.group_sizes.push_back(grp.neurons);
  }
  return m;
}

PruneMask full_unstructured_mask(const NetworkGraph& g) {
  PruneMask m;
  m.mode = PruneMask::Mode::Unstructured;
  m.graph_hash = g.structure_hash();
  for (const auto& node : g.nodes())
    m.weight_masks.push_back(maskable(node) ? Tensor(node.weight.shape(), 1.0) : Tensor(Shape{0}));
  return m;
}

void check_mask(const NetworkGraph& g, const PruneMask& mask) {
  if (mask.graph_hash != g.structure_hash()) throw DimensionError("mask was built for a different graph");
  if (mask.mode == PruneMask::Mode::Structured) {
    if (mask.keep.size() != mask.group_sizes.size()) throw DimensionError("mask keep-sets do not match groups");
    for (std::size_t k = 0; k < mask.keep.size(); ++k) {
      if (mask.keep[k].empty()) throw DimensionError("mask empties group " + std::to_string(k));
      for (std::size_t j : mask.keep[k])
        if (j >= mask.group_sizes[k]) throw DimensionError("mask keeps a neuron outside its group");
    }
  } else {
    if (mask.weight_masks.size() != g.size()) throw DimensionError("mask does not cover every node");
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Tensor& m = mask.weight_masks[i];
      if (m.size() != 0 && !m.same_shape(g.node(i).weight)) {
        throw DimensionError("mask for '" + g.node(i).id + "' does not match its weight");
      }
    }
  }
}

NetworkGraph apply_mask(const NetworkGraph& g, const PruneMask& mask) {
  check_mask(g, mask);
  std::vector<LayerNode> nodes = g.nodes();
  std::string loss_id = g.node(g.loss_index()).id;
  if (mask.mode == PruneMask::Mode::Unstructured) {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (mask.weight_masks[i].size() != 0) nodes[i].weight = mul(nodes[i].weight, mask.weight_masks[i]);
    return NetworkGraph(g.input_shape(), std::move(nodes), loss_id);
  }
  const auto groups = discover_groups(g);
  if (groups.size() != mask.keep.size()) throw DimensionError("mask keep-sets do not match groups");
  std::vector<std::vector<bool>> drop_rows(g.size()), drop_cols(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!maskable(g.node(i))) continue;
    drop_rows[i].assign(g.node(i).weight.dim(0), false);
    drop_cols[i].assign(g.node(i).weight.dim(1), false);
  }
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto& grp = groups[k];
    if (grp.neurons != mask.group_sizes[k]) throw DimensionError("mask group sizes do not match the graph");
    std::vector<bool> kept(grp.neurons, false);
    for (std::size_t j : mask.keep[k]) kept[j] = true;
    for (std::size_t j = 0; j < grp.neurons; ++j) {
      if (kept[j]) continue;
      for (const auto& m : grp.producers)
        for (std::size_t r : m.indices[j]) drop_rows[m.node][r] = true;
      for (const auto& m : grp.consumers)
        for (std::size_t c : m.indices[j]) drop_cols[m.node][c] = true;
    }
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!maskable(g.node(i))) continue;
    LayerNode& n = nodes[i];
    const auto rows = complement(n.weight.dim(0), drop_rows[i]);
    const auto cols = complement(n.weight.dim(1), drop_cols[i]);
    n.weight = select_axis(select_axis(n.weight, 0, rows), 1, cols);
    if (n.has_bias()) n.bias = select_axis(n.bias, 0, rows);
  }
  return NetworkGraph(g.input_shape(), std::move(nodes), loss_id);
}

OutputGates structured_gates(const NetworkGraph& g, const PruneMask& mask) {
  check_mask(g, mask);
  if (mask.mode != PruneMask::Mode::Structured) throw DimensionError("gates need a structured mask");
  const auto groups = discover_groups(g);
  OutputGates gates;
  gates.per_node.assign(g.size(), {});
  for (std::size_t k = 0; k < groups.size(); ++k) {
    for (const auto& m : groups[k].producers) {
      auto& gate = gates.per_node[m.node];
      gate.assign(groups[k].neurons, 0.0);
      for (std::size_t j : mask.keep[k]) gate[j] = 1.0;
    }
  }
  return gates;
}

void enforce_mask(NetworkGraph& g, const PruneMask& mask) {
  if (mask.mode != PruneMask::Mode::Unstructured) return;
  check_mask(g, mask);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (mask.weight_masks[i].size() != 0) g.weight(i) = mul(g.weight(i), mask.weight_masks[i]);
}

}  // namespace oba
