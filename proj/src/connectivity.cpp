#include "oba/connectivity.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

#include "oba/errors.hpp"
#include "oba/layers.hpp"
#include "oba/mask.hpp"

namespace oba {

namespace {

std::vector<std::vector<bool>> descendants(const NetworkGraph& g) {
  const std::size_t n = g.size();
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t c : g.consumers(i)) {
      reach[i][c] = true;
      for (std::size_t k = 0; k < n; ++k)
        if (reach[c][k]) reach[i][k] = true;
    }
  }
  return reach;
}

std::vector<std::size_t> matmul_side(const NetworkGraph& g, std::size_t m, std::size_t slot) {
  const std::size_t p = g.producers(m).at(slot);
  if (p == NetworkGraph::npos) return {};
  return parameter_ancestors(g, p);
}

ConnectivityMap::Parallel parallel_entry(const NetworkGraph& g, std::size_t m) {
  ConnectivityMap::Parallel par;
  par.matmul = m;
  par.left = matmul_side(g, m, 0);
  par.right = matmul_side(g, m, 1);
  std::vector<std::size_t> both;
  std::set_intersection(par.left.begin(), par.left.end(), par.right.begin(), par.right.end(),
                        std::back_inserter(both));
  if (!both.empty()) {
    throw GraphError("parameter layer '" + g.node(both.front()).id + "' reaches both operands of MatMul '" +
                     g.node(m).id + "'; shared parameters across MatMul operands are not supported");
  }
  return par;
}

// --- group discovery

class UnionFind {
 public:
  std::size_t make(std::size_t size) {
    parent_.push_back(parent_.size());
    size_.push_back(size);
    blocked_.push_back(false);
    return parent_.size() - 1;
  }
  std::size_t find(std::size_t v) {
    while (parent_[v] != v) v = parent_[v] = parent_[parent_[v]];
    return v;
  }
  void unite(std::size_t a, std::size_t b, const std::string& where) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] != size_[b]) {
      throw GraphError("inconsistent aliased dimensions at '" + where + "': " + std::to_string(size_[a]) +
                       " vs " + std::to_string(size_[b]));
    }
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    blocked_[a] = blocked_[a] || blocked_[b];
  }
  void block(std::size_t v) { blocked_[find(v)] = true; }
  bool blocked(std::size_t v) { return blocked_[find(v)]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
  std::vector<bool> blocked_;
};

/// A tensor's feature axis carrying neuron variable `var`; map[j] lists the
/// feature positions that neuron j occupies.
struct Alias {
  std::size_t var = 0;
  std::vector<std::vector<std::size_t>> map;
};

std::vector<std::vector<std::size_t>> identity_map(std::size_t n) {
  std::vector<std::vector<std::size_t>> m(n);
  for (std::size_t j = 0; j < n; ++j) m[j] = {j};
  return m;
}

std::size_t feature_width(const Shape& s) { return s.empty() ? 1 : s[feature_axis(s)]; }

}  // namespace

std::vector<std::size_t> parameter_ancestors(const NetworkGraph& g, std::size_t target) {
  std::vector<bool> seen(g.size(), false);
  std::vector<std::size_t> stack{target};
  seen[target] = true;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    for (std::size_t p : g.producers(v)) {
      if (p == NetworkGraph::npos || seen[p]) continue;
      seen[p] = true;
      stack.push_back(p);
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (seen[i] && g.node(i).has_params()) out.push_back(i);
  return out;
}

ConnectivityMap series_sets(const NetworkGraph& g) {
  ConnectivityMap cm;
  cm.upper.assign(g.size(), {});
  cm.lower.assign(g.size(), {});
  const auto reach = descendants(g);
  for (std::size_t l : g.parameter_layers())
    for (std::size_t u : g.parameter_layers())
      if (reach[l][u]) {
        cm.upper[l].push_back(u);
        cm.lower[u].push_back(l);
      }
  return cm;
}

ConnectivityMap parallel_sets(const NetworkGraph& g) {
  ConnectivityMap cm;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.node(i).kind == LayerKind::MatMul) cm.parallel.push_back(parallel_entry(g, i));
  return cm;
}

ConnectivityMap connectivity(const NetworkGraph& g) {
  ConnectivityMap cm = series_sets(g);
  cm.parallel = parallel_sets(g).parallel;
  return cm;
}

void require_supported(const NetworkGraph& g) { (void)parallel_sets(g); }

std::vector<GroupSpec> discover_groups(const NetworkGraph& g) {
  UnionFind uf;
  std::vector<std::optional<Alias>> out_alias(g.size());
  std::vector<std::size_t> producer_var(g.size(), NetworkGraph::npos);
  struct ConsumerRec {
    std::size_t node;
    Alias alias;
  };
  std::vector<ConsumerRec> consumers;

  for (std::size_t i = 0; i < g.size(); ++i) {
    const LayerNode& node = g.node(i);
    std::vector<std::optional<Alias>> in;
    for (std::size_t p : g.producers(i)) in.push_back(p == NetworkGraph::npos ? std::nullopt : out_alias[p]);
    auto block_all = [&] {
      for (const auto& a : in)
        if (a) uf.block(a->var);
    };
    std::optional<Alias> out;
    switch (node.kind) {
      case LayerKind::Linear:
      case LayerKind::Conv2d: {
        if (in[0]) consumers.push_back({i, *in[0]});
        const std::size_t width = node.weight.dim(0);
        producer_var[i] = uf.make(width);
        out = Alias{producer_var[i], identity_map(width)};
        break;
      }
      case LayerKind::ReLU:
      case LayerKind::Scale:
      case LayerKind::AvgPool:
      case LayerKind::MaxPool:
        out = in[0];
        break;
      case LayerKind::Flatten: {
        if (!in[0]) break;
        const Shape& s = node.in_shapes[0];
        const std::size_t axis = feature_axis(s);
        std::size_t inner = 1;
        for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
        const std::size_t width = s.empty() ? 1 : s[axis];
        const std::size_t outer = shape_numel(s) / (inner * width);
        Alias a{in[0]->var, {}};
        for (const auto& positions : in[0]->map) {
          std::vector<std::size_t> flat;
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t c : positions)
              for (std::size_t k = 0; k < inner; ++k) flat.push_back((o * width + c) * inner + k);
          std::sort(flat.begin(), flat.end());
          a.map.push_back(std::move(flat));
        }
        out = std::move(a);
        break;
      }
      case LayerKind::Add: {
        bool all = in[0].has_value();
        for (const auto& a : in) all = all && a && a->map == in[0]->map;
        if (!all) {
          block_all();
          break;
        }
        for (std::size_t s = 1; s < in.size(); ++s) uf.unite(in[0]->var, in[s]->var, node.id);
        out = in[0];
        break;
      }
      case LayerKind::MatMul: {
        const bool trans = node.attrs.transpose_right;
        const auto& l = in[0];
        const auto& r = in[1];
        if (trans) {
          if (l && r && l->map == r->map) {
            uf.unite(l->var, r->var, node.id);
          } else {
            block_all();
          }
        } else {
          if (l) uf.block(l->var);
          out = r;
        }
        break;
      }
      case LayerKind::Softmax:
      case LayerKind::LayerNorm:
      case LayerKind::CrossEntropyLoss:
      case LayerKind::LinearLoss:
      case LayerKind::SquaredErrorLoss:
        block_all();
        break;
    }
    if (out && feature_width(node.out_shape) == 0) out.reset();
    out_alias[i] = std::move(out);
  }

  std::vector<GroupSpec> groups;
  std::vector<std::size_t> root_to_group;
  std::vector<std::size_t> group_root;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (producer_var[i] == NetworkGraph::npos || uf.blocked(producer_var[i])) continue;
    const std::size_t root = uf.find(producer_var[i]);
    auto it = std::find(group_root.begin(), group_root.end(), root);
    std::size_t gi;
    if (it == group_root.end()) {
      gi = groups.size();
      group_root.push_back(root);
      GroupSpec spec;
      spec.id = gi;
      spec.neurons = g.node(i).weight.dim(0);
      groups.push_back(std::move(spec));
    } else {
      gi = static_cast<std::size_t>(it - group_root.begin());
    }
    GroupMember m{i, identity_map(groups[gi].neurons)};
    groups[gi].producers.push_back(std::move(m));
  }
  for (auto& c : consumers) {
    if (uf.blocked(c.alias.var)) continue;
    const std::size_t root = uf.find(c.alias.var);
    auto it = std::find(group_root.begin(), group_root.end(), root);
    if (it == group_root.end()) continue;
    const std::size_t gi = static_cast<std::size_t>(it - group_root.begin());
    if (c.alias.map.size() != groups[gi].neurons) {
      throw GraphError("inconsistent aliased dimensions at consumer '" + g.node(c.node).id + "'");
    }
    groups[gi].consumers.push_back({c.node, std::move(c.alias.map)});
  }
  return groups;
}

std::vector<ParamEntry> neuron_entries(const NetworkGraph& g, const GroupSpec& group, std::size_t j) {
  std::vector<ParamEntry> out;
  for (const auto& m : group.producers) {
    const Tensor& w = g.node(m.node).weight;
    const std::size_t row = w.size() / w.dim(0);
    for (std::size_t r : m.indices[j]) {
      for (std::size_t k = 0; k < row; ++k) out.push_back({m.node, false, r * row + k});
      if (g.node(m.node).has_bias()) out.push_back({m.node, true, r});
    }
  }
  for (const auto& m : group.consumers) {
    const Tensor& w = g.node(m.node).weight;
    const std::size_t cols = w.dim(1);
    const std::size_t inner = w.size() / (w.dim(0) * cols);
    for (std::size_t o = 0; o < w.dim(0); ++o)
      for (std::size_t c : m.indices[j])
        for (std::size_t k = 0; k < inner; ++k) out.push_back({m.node, false, (o * cols + c) * inner + k});
  }
  return out;
}

FlopCount count_flops(const NetworkGraph& g, const PruneMask* mask) {
  if (mask && mask->mode == PruneMask::Mode::Structured) return count_flops(apply_mask(g, *mask));
  if (mask) check_mask(g, *mask);
  FlopCount fc;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const LayerNode& node = g.node(i);
    const std::uint64_t out_numel = shape_numel(node.out_shape);
    std::uint64_t kept = node.weight.size();
    if (mask && node.has_params() && mask->weight_masks[i].size() == node.weight.size()) {
      kept = static_cast<std::uint64_t>(sum(mask->weight_masks[i]));
    }
    switch (node.kind) {
      case LayerKind::Linear: {
        const std::uint64_t rows = shape_numel(node.in_shapes[0]) / node.weight.dim(1);
        fc.flops += 2 * kept * rows;
        break;
      }
      case LayerKind::Conv2d:
        fc.flops += 2 * kept * node.out_shape[1] * node.out_shape[2];
        break;
      case LayerKind::MatMul: {
        const Shape& l = node.in_shapes[0];
        fc.flops += 2 * l[0] * l[1] * node.out_shape[1];
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::CrossEntropyLoss:
      case LayerKind::LinearLoss:
      case LayerKind::SquaredErrorLoss:
        break;
      default:
        fc.flops += out_numel;
    }
    fc.params += kept + node.bias.size();
  }
  return fc;
}

}  // namespace oba
