#include "oba/params.hpp"

#include <cmath>

#include "oba/errors.hpp"

namespace oba {

ParamTensors zeros_like_params(const NetworkGraph& g) {
  ParamTensors out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    out[i].weight = Tensor(g.node(i).weight.shape());
    out[i].bias = Tensor(g.node(i).bias.shape());
  }
  return out;
}

ParamTensors params_of(const NetworkGraph& g) {
  ParamTensors out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    out[i].weight = g.node(i).weight;
    out[i].bias = g.node(i).bias;
  }
  return out;
}

void set_params(NetworkGraph& g, const ParamTensors& p) {
  if (p.size() != g.size()) throw DimensionError("parameter set does not match graph");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!p[i].weight.same_shape(g.node(i).weight) || !p[i].bias.same_shape(g.node(i).bias)) {
      throw DimensionError("parameter shapes for '" + g.node(i).id + "' do not match");
    }
    g.weight(i) = p[i].weight;
    g.bias(i) = p[i].bias;
  }
}

void params_axpy(double s, const ParamTensors& b, ParamTensors& a) {
  if (a.size() != b.size()) throw DimensionError("params_axpy: layer count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    axpy(s, b[i].weight, a[i].weight);
    axpy(s, b[i].bias, a[i].bias);
  }
}

ParamTensors params_scaled(const ParamTensors& a, double s) {
  ParamTensors out = a;
  for (auto& p : out) {
    p.weight = scale(p.weight, s);
    p.bias = scale(p.bias, s);
  }
  return out;
}

double params_dot(const ParamTensors& a, const ParamTensors& b) {
  if (a.size() != b.size()) throw DimensionError("params_dot: layer count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += dot(a[i].weight, b[i].weight) + dot(a[i].bias, b[i].bias);
  return s;
}

double params_norm2(const ParamTensors& a) { return std::sqrt(params_dot(a, a)); }

std::vector<double> params_flatten(const ParamTensors& a) {
  std::vector<double> out;
  for (const auto& p : a) {
    out.insert(out.end(), p.weight.data().begin(), p.weight.data().end());
    out.insert(out.end(), p.bias.data().begin(), p.bias.data().end());
  }
  return out;
}

ParamTensors DeltaRule::resolve(const NetworkGraph& g) const {
  if (kind == Kind::ParamItself) return params_of(g);
  if (custom.size() != g.size()) throw DimensionError("custom delta rule does not cover every node");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!custom[i].weight.same_shape(g.node(i).weight) || !custom[i].bias.same_shape(g.node(i).bias)) {
      throw DimensionError("custom delta for '" + g.node(i).id + "' does not match parameter shapes");
    }
  }
  return custom;
}

}  // namespace oba
