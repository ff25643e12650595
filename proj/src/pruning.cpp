#include "oba/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "oba/errors.hpp"

namespace oba {

namespace {

bool maskable(const LayerNode& n) { return n.kind == LayerKind::Linear || n.kind == LayerKind::Conv2d; }

}  // namespace

std::string_view normalization_name(Normalization n) {
  switch (n) {
    case Normalization::None:
      return "none";
    case Normalization::Standardization:
      return "standardization";
    case Normalization::Max:
      return "max";
    case Normalization::L2:
      return "l2";
  }
  return "?";
}

Normalization parse_normalization(std::string_view name) {
  for (auto n : {Normalization::None, Normalization::Standardization, Normalization::Max, Normalization::L2})
    if (normalization_name(n) == name) return n;
  throw ConfigError("unknown normalization '" + std::string(name) + "'");
}

NeuronScores gather_neuron_scores(const NetworkGraph& g, const ImportanceTable& table,
                                  const std::vector<GroupSpec>& groups) {
  if (table.graph_hash != g.structure_hash()) throw DimensionError("importance table belongs to another graph");
  NeuronScores out;
  for (const auto& grp : groups) {
    std::vector<double> s(grp.neurons, 0.0);
    std::size_t lower = 0, upper = 0;
    for (std::size_t j = 0; j < grp.neurons; ++j) {
      for (const ParamEntry& e : neuron_entries(g, grp, j)) {
        const LayerParams& p = table.scores[e.node];
        s[j] += e.bias ? p.bias[e.index] : p.weight[e.index];
      }
    }
    for (const auto& m : grp.producers) {
      const Tensor& w = g.node(m.node).weight;
      lower += w.size() / w.dim(0) + (g.node(m.node).has_bias() ? 1 : 0);
    }
    for (const auto& m : grp.consumers) {
      const Tensor& w = g.node(m.node).weight;
      upper += m.indices.empty() ? 0 : m.indices[0].size() * (w.size() / w.dim(1));
    }
    out.groups.push_back(std::move(s));
    out.lower_params.push_back(lower);
    out.upper_params.push_back(upper);
  }
  return out;
}

std::vector<double> normalize_vector(std::vector<double> v, Normalization method, bool* degenerate) {
  if (degenerate) *degenerate = false;
  if (v.empty()) throw DimensionError("cannot normalize an empty score vector");
  switch (method) {
    case Normalization::None:
      break;
    case Normalization::Standardization: {
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      const double mn = *lo, range = *hi - *lo;
      for (double& x : v) x = range == 0.0 ? 0.0 : (x - mn) / range;
      break;
    }
    case Normalization::Max: {
      double m = 0.0;
      for (double x : v) m = std::max(m, std::abs(x));
      if (m == 0.0) {
        if (degenerate) *degenerate = true;
        break;
      }
      for (double& x : v) x /= m;
      break;
    }
    case Normalization::L2: {
      double ss = 0.0;
      for (double x : v) ss += x * x;
      if (ss == 0.0) {
        if (degenerate) *degenerate = true;
        break;
      }
      const double n = std::sqrt(ss);
      for (double& x : v) x /= n;
      break;
    }
  }
  return v;
}

NeuronScores normalize_scores(NeuronScores scores, Normalization method) {
  for (std::size_t k = 0; k < scores.groups.size(); ++k) {
    bool degenerate = false;
    scores.groups[k] = normalize_vector(std::move(scores.groups[k]), method, &degenerate);
    if (degenerate) {
      scores.warnings.push_back("group " + std::to_string(k) + " is all zero; " +
                                std::string(normalization_name(method)) + " normalization left it unchanged");
    }
  }
  return scores;
}

PruneMask rank_and_select_count(const NetworkGraph& g, const NeuronScores& scores, std::size_t count) {
  PruneMask mask = full_structured_mask(g);
  if (scores.groups.size() != mask.keep.size()) throw DimensionError("scores do not cover the graph's groups");
  using Item = std::tuple<double, std::size_t, std::size_t>;
  std::vector<Item> items;
  std::vector<std::size_t> protected_neuron(scores.groups.size());
  std::size_t total = 0;
  for (std::size_t k = 0; k < scores.groups.size(); ++k) {
    const auto& s = scores.groups[k];
    if (s.size() != mask.group_sizes[k]) throw DimensionError("score vector length differs from group size");
    std::size_t best = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      items.emplace_back(s[j], k, j);
      if (s[j] >= s[best]) best = j;
    }
    protected_neuron[k] = best;
    total += s.size();
  }
  std::sort(items.begin(), items.end());
  std::vector<std::vector<bool>> pruned(scores.groups.size());
  for (std::size_t k = 0; k < pruned.size(); ++k) pruned[k].assign(scores.groups[k].size(), false);
  std::size_t done = 0;
  for (const auto& [s, k, j] : items) {
    if (done == count) break;
    if (j == protected_neuron[k]) continue;
    pruned[k][j] = true;
    ++done;
  }
  for (std::size_t k = 0; k < pruned.size(); ++k) {
    mask.keep[k].clear();
    for (std::size_t j = 0; j < pruned[k].size(); ++j)
      if (!pruned[k][j]) mask.keep[k].push_back(j);
  }
  mask.pruned = done;
  mask.sparsity = total ? static_cast<double>(done) / static_cast<double>(total) : 0.0;
  return mask;
}

PruneMask rank_and_select(const NetworkGraph& g, const NeuronScores& scores, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("pruning fraction must lie in [0, 1)");
  std::size_t total = 0;
  for (const auto& s : scores.groups) total += s.size();
  return rank_and_select_count(g, scores, static_cast<std::size_t>(std::floor(p * static_cast<double>(total))));
}

PruneMask select_unstructured(const NetworkGraph& g, const ParamTensors& scores, double sparsity,
                              const PruneMask* previous) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ConfigError("sparsity must lie in [0, 1)");
  PruneMask mask = previous ? *previous : full_unstructured_mask(g);
  check_mask(g, mask);
  if (mask.mode != PruneMask::Mode::Unstructured) throw ConfigError("previous mask is not unstructured");
  using Item = std::tuple<double, std::size_t, std::size_t>;
  std::vector<Item> items;
  std::size_t total = 0, already = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!maskable(g.node(i))) continue;
    const Tensor& m = mask.weight_masks[i];
    total += m.size();
    for (std::size_t q = 0; q < m.size(); ++q) {
      if (m[q] == 0.0) {
        ++already;
      } else {
        items.emplace_back(scores[i].weight[q], i, q);
      }
    }
  }
  const auto target = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(total)));
  const std::size_t extra = target > already ? std::min(target - already, items.size()) : 0;
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(extra), items.end());
  for (std::size_t n = 0; n < extra; ++n) {
    const auto& [s, i, q] = items[n];
    mask.weight_masks[i][q] = 0.0;
  }
  mask.pruned = already + extra;
  mask.sparsity = total ? static_cast<double>(mask.pruned) / static_cast<double>(total) : 0.0;
  return mask;
}

}  // namespace oba
