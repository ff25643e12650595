#include "oba/autodiff.hpp"

#include "oba/errors.hpp"

namespace oba {

namespace {

void apply_gate(Tensor& t, const Shape& per_sample, const std::vector<double>& gate) {
  if (gate.empty()) return;
  const std::size_t axis = feature_axis(per_sample);
  if (per_sample.empty() || gate.size() != per_sample[axis]) throw DimensionError("gate does not match feature axis");
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < per_sample.size(); ++a) inner *= per_sample[a];
  const std::size_t width = gate.size();
  const std::size_t outer = t.size() / (inner * width);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < width; ++j)
      for (std::size_t k = 0; k < inner; ++k) t[(o * width + j) * inner + k] *= gate[j];
}

const std::vector<double>& gate_of(const ForwardCache& cache, std::size_t i) {
  static const std::vector<double> none;
  return i < cache.gates.per_node.size() ? cache.gates.per_node[i] : none;
}

void check_cache(const NetworkGraph& g, const ForwardCache& cache) {
  if (cache.nodes.size() != g.size() || cache.graph_hash != g.structure_hash()) {
    throw GraphError("forward cache does not belong to this graph");
  }
}

bool present(const Tensor& t) { return !(t.rank() == 1 && t.dim(0) == 0); }

}  // namespace

bool OutputGates::empty() const {
  for (const auto& gv : per_node)
    if (!gv.empty()) return false;
  return true;
}

ForwardCache forward(const NetworkGraph& g, const Tensor& batch, const Tensor& targets, const OutputGates* gates) {
  Shape expected = g.input_shape();
  if (batch.rank() != expected.size() + 1 || Shape(batch.shape().begin() + 1, batch.shape().end()) != expected) {
    throw DimensionError("batch shape " + shape_to_string(batch.shape()) + " does not match input " +
                         shape_to_string(expected));
  }
  ForwardCache cache;
  cache.batch = batch.dim(0);
  cache.graph_hash = g.structure_hash();
  cache.nodes.resize(g.size());
  if (gates) {
    if (gates->per_node.size() != g.size()) throw DimensionError("gates do not cover every node");
    cache.gates = *gates;
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    const LayerNode& node = g.node(i);
    std::vector<Tensor> inputs;
    for (std::size_t p : g.producers(i)) inputs.push_back(p == NetworkGraph::npos ? batch : cache.nodes[p].output);
    cache.nodes[i] = layer_forward(node, std::move(inputs), is_loss_kind(node.kind) ? &targets : nullptr);
    apply_gate(cache.nodes[i].output, node.out_shape, gate_of(cache, i));
  }
  cache.loss = cache.nodes[g.loss_index()].output.item();
  return cache;
}

const Tensor& node_input(const ForwardCache& cache, std::size_t i, std::size_t s) {
  return cache.nodes.at(i).inputs.at(s);
}

GradientRecord reverse_sweep(const NetworkGraph& g, const ForwardCache& cache, const std::vector<Tensor>& seeds,
                             bool seed_loss) {
  check_cache(g, cache);
  if (!seeds.empty() && seeds.size() != g.size()) throw DimensionError("seeds do not cover every node");
  GradientRecord rec;
  rec.params = zeros_like_params(g);
  rec.outputs.assign(g.size(), Tensor(Shape{0}));
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!present(seeds[i])) continue;
    if (!seeds[i].same_shape(cache.nodes[i].output)) {
      throw DimensionError("seed for '" + g.node(i).id + "' has shape " + shape_to_string(seeds[i].shape()));
    }
    rec.outputs[i] = seeds[i];
  }
  if (seed_loss) {
    Tensor& l = rec.outputs[g.loss_index()];
    l = present(l) ? add(l, Tensor::scalar(1.0)) : Tensor::scalar(1.0);
  }
  for (std::size_t i = g.size(); i-- > 0;) {
    if (!present(rec.outputs[i])) continue;
    Tensor upstream = rec.outputs[i];
    apply_gate(upstream, g.node(i).out_shape, gate_of(cache, i));
    LayerVjp v = layer_vjp(g.node(i), cache.nodes[i], upstream);
    if (g.node(i).has_params()) {
      axpy(1.0, v.params.weight, rec.params[i].weight);
      axpy(1.0, v.params.bias, rec.params[i].bias);
    }
    const auto& prods = g.producers(i);
    for (std::size_t s = 0; s < prods.size(); ++s) {
      const std::size_t p = prods[s];
      if (p == NetworkGraph::npos) continue;
      if (present(rec.outputs[p])) {
        axpy(1.0, v.inputs[s], rec.outputs[p]);
      } else {
        rec.outputs[p] = std::move(v.inputs[s]);
      }
    }
  }
  return rec;
}

GradientRecord backward(const NetworkGraph& g, const ForwardCache& cache) { return reverse_sweep(g, cache, {}, true); }

TangentRecord jvp_sweep(const NetworkGraph& g, const ForwardCache& cache, const ParamTensors& theta_tangent,
                        const Tensor* input_tangent) {
  check_cache(g, cache);
  if (theta_tangent.size() != g.size()) throw DimensionError("parameter tangents do not cover every node");
  TangentRecord rec;
  rec.inputs.resize(g.size());
  rec.outputs.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const LayerNode& node = g.node(i);
    const auto& prods = g.producers(i);
    for (std::size_t s = 0; s < prods.size(); ++s) {
      if (prods[s] != NetworkGraph::npos) {
        rec.inputs[i].push_back(rec.outputs[prods[s]]);
      } else if (input_tangent) {
        if (!input_tangent->same_shape(node_input(cache, i, s))) throw DimensionError("input tangent shape mismatch");
        rec.inputs[i].push_back(*input_tangent);
      } else {
        rec.inputs[i].push_back(Tensor(node_input(cache, i, s).shape()));
      }
    }
    const LayerParams* dt = node.has_params() ? &theta_tangent[i] : nullptr;
    rec.outputs[i] = layer_jvp(node, cache.nodes[i], rec.inputs[i], dt);
    apply_gate(rec.outputs[i], node.out_shape, gate_of(cache, i));
  }
  return rec;
}

TangentRecord jvpf_run(const NetworkGraph& g, const ForwardCache& cache, const DeltaRule& rule) {
  TangentRecord rec = jvp_sweep(g, cache, rule.resolve(g));
  rec.rule = rule;
  return rec;
}

double loss_value(const NetworkGraph& g, const Tensor& batch, const Tensor& targets, const OutputGates* gates) {
  return forward(g, batch, targets, gates).loss;
}

}  // namespace oba
