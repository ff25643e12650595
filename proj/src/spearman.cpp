#include "oba/spearman.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oba/autodiff.hpp"
#include "oba/errors.hpp"

namespace oba {

std::string_view scope_name(SpearmanScope s) { return s == SpearmanScope::PerLayer ? "per_layer" : "all_layers"; }

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("spearman: vectors differ in length");
  if (a.size() < 2) return std::nullopt;
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> masking_ground_truth(const NetworkGraph& g, const Batch& eval, std::size_t layer) {
  const LayerNode& node = g.node(layer);
  if (!node.has_params() || node.kind == LayerKind::LayerNorm) {
    throw GraphError("'" + node.id + "' has no prunable output neurons");
  }
  const double base = loss_value(g, eval.inputs, eval.targets);
  const std::size_t width = node.weight.dim(0);
  std::vector<double> gt(width);
  OutputGates gates;
  gates.per_node.assign(g.size(), {});
  for (std::size_t j = 0; j < width; ++j) {
    gates.per_node[layer].assign(width, 1.0);
    gates.per_node[layer][j] = 0.0;
    gt[j] = loss_value(g, eval.inputs, eval.targets, &gates) - base;
  }
  return gt;
}

std::vector<std::size_t> prunable_layers(const NetworkGraph& g) {
  std::vector<std::size_t> out;
  for (const auto& grp : discover_groups(g))
    for (const auto& m : grp.producers) out.push_back(m.node);
  return out;
}

SpearmanResult spearman_eval(const NetworkGraph& g, const Batch& eval, const std::vector<std::size_t>& layers,
                             const NeuronScores& scores, Normalization normalization) {
  const auto groups = discover_groups(g);
  if (scores.groups.size() != groups.size()) throw DimensionError("neuron scores do not cover the graph's groups");
  SpearmanResult res;
  std::vector<double> all_est, all_gt;
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t layer : layers) {
    std::size_t gi = groups.size();
    for (std::size_t k = 0; k < groups.size() && gi == groups.size(); ++k)
      for (const auto& m : groups[k].producers)
        if (m.node == layer) gi = k;
    if (gi == groups.size()) throw GraphError("layer '" + g.node(layer).id + "' is not prunable");
    const std::vector<double>& est = scores.groups[gi];
    const std::vector<double> gt = masking_ground_truth(g, eval, layer);
    const auto rho = spearman(est, gt);
    res.layers.push_back(g.node(layer).id);
    res.per_layer.push_back(rho);
    if (rho) {
      sum += *rho;
      ++defined;
    }
    const auto norm = normalize_vector(est, normalization);
    all_est.insert(all_est.end(), norm.begin(), norm.end());
    all_gt.insert(all_gt.end(), gt.begin(), gt.end());
    for (std::size_t j = 0; j < est.size(); ++j) res.rows.push_back({g.node(layer).id, j, est[j], gt[j]});
  }
  if (defined) res.per_layer_mean = sum / static_cast<double>(defined);
  res.all_layers = spearman(all_est, all_gt);
  return res;
}

}  // namespace oba
