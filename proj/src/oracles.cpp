#include "oba/oracles.hpp"

#include <cmath>
#include <map>

#include "oba/autodiff.hpp"
#include "oba/connectivity.hpp"
#include "oba/errors.hpp"

namespace oba {

namespace {

struct Dense {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;
  Dense(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

/// y = A^T x
std::vector<double> transpose_times(const Dense& a, const std::vector<double>& x) {
  std::vector<double> y(a.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) y[j] += a(i, j) * x[i];
  return y;
}

/// y = A x
std::vector<double> times(const Dense& a, const std::vector<double>& x) {
  std::vector<double> y(a.rows, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) y[i] += a(i, j) * x[j];
  return y;
}

std::vector<double> flat_params(const LayerParams& p) {
  std::vector<double> out(p.weight.storage());
  out.insert(out.end(), p.bias.storage().begin(), p.bias.storage().end());
  return out;
}

/// Jacobians of one activation tensor w.r.t. every parameter layer, one dense
/// matrix [activation entries, layer parameters] per layer, built row by row.
class ActivationJacobian {
 public:
  ActivationJacobian(const NetworkGraph& g, const ForwardCache& cache, std::size_t producer) {
    const Tensor& act = cache.nodes[producer].output;
    for (std::size_t l : g.parameter_layers()) per_layer_.emplace(l, Dense(act.size(), g.node(l).param_count()));
    std::vector<Tensor> seeds(g.size(), Tensor(Shape{0}));
    for (std::size_t e = 0; e < act.size(); ++e) {
      Tensor one(act.shape());
      one[e] = 1.0;
      seeds[producer] = one;
      const GradientRecord rec = reverse_sweep(g, cache, seeds, false);
      for (auto& [l, d] : per_layer_) {
        const auto row = flat_params(rec.params[l]);
        std::copy(row.begin(), row.end(), d.v.begin() + static_cast<std::ptrdiff_t>(e * d.cols));
      }
    }
  }
  const Dense& wrt(std::size_t layer) const { return per_layer_.at(layer); }

 private:
  std::map<std::size_t, Dense> per_layer_;
};

/// Dense normalization Jacobian of one LayerNorm row.
Dense layernorm_row_jacobian(const double* n, double rstd, std::size_t d) {
  Dense j(d, d);
  const double inv = 1.0 / static_cast<double>(d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) j(a, b) = rstd * ((a == b ? 1.0 : 0.0) - inv - n[a] * n[b] * inv);
  return j;
}

/// Input-output Jacobian of a parameter layer with `surrogate` as weights,
/// over the whole batch: [y entries, x entries].
Dense surrogate_jacobian(const LayerNode& node, const LayerPrimal& primal, const Tensor& surrogate) {
  const Tensor& x = primal.inputs[0];
  const Tensor& y = primal.output;
  Dense j(y.size(), x.size());
  switch (node.kind) {
    case LayerKind::Linear: {
      const std::size_t out = surrogate.dim(0), in = surrogate.dim(1), rows = x.size() / in;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o)
          for (std::size_t c = 0; c < in; ++c) j(r * out + o, r * in + c) = surrogate[o * in + c];
      break;
    }
    case LayerKind::Conv2d: {
      const Tensor m = materialize_m(node);
      const std::size_t pout = m.dim(0), pw = m.dim(1), pin = m.dim(2);
      const std::size_t co = surrogate.dim(0), ci = surrogate.dim(1);
      const std::size_t batch = x.dim(0);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t a = 0; a < co; ++a)
          for (std::size_t b = 0; b < pout; ++b)
            for (std::size_t c = 0; c < ci; ++c)
              for (std::size_t e = 0; e < pin; ++e) {
                double s = 0.0;
                for (std::size_t d = 0; d < pw; ++d) s += surrogate[(a * ci + c) * pw + d] * m.at(b, d, e);
                j((n * co + a) * pout + b, (n * ci + c) * pin + e) = s;
              }
      break;
    }
    case LayerKind::LayerNorm: {
      const std::size_t d = x.shape().back(), rows = x.size() / d;
      for (std::size_t r = 0; r < rows; ++r) {
        const Dense jn = layernorm_row_jacobian(primal.aux.data().data() + r * d, primal.rstd[r], d);
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = 0; b < d; ++b) j(r * d + a, r * d + b) = surrogate[a] * jn(a, b);
      }
      break;
    }
    default:
      throw GraphError("no surrogate Jacobian for '" + node.id + "'");
  }
  return j;
}

/// d y / d w with the input tangent in place of the input: [y entries, w entries].
Dense weight_jacobian_at(const LayerNode& node, const LayerPrimal& primal, const Tensor& xt) {
  const Tensor& y = primal.output;
  const Tensor& w = node.weight;
  Dense j(y.size(), w.size());
  switch (node.kind) {
    case LayerKind::Linear: {
      const std::size_t out = w.dim(0), in = w.dim(1), rows = xt.size() / in;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o)
          for (std::size_t c = 0; c < in; ++c) j(r * out + o, o * in + c) = xt[r * in + c];
      break;
    }
    case LayerKind::Conv2d: {
      const Tensor m = materialize_m(node);
      const std::size_t pout = m.dim(0), pw = m.dim(1), pin = m.dim(2);
      const std::size_t co = w.dim(0), ci = w.dim(1), batch = xt.dim(0);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t a = 0; a < co; ++a)
          for (std::size_t b = 0; b < pout; ++b)
            for (std::size_t c = 0; c < ci; ++c)
              for (std::size_t d = 0; d < pw; ++d) {
                double s = 0.0;
                for (std::size_t e = 0; e < pin; ++e) s += xt[(n * ci + c) * pin + e] * m.at(b, d, e);
                j((n * co + a) * pout + b, (a * ci + c) * pw + d) = s;
              }
      break;
    }
    case LayerKind::LayerNorm: {
      const std::size_t d = xt.shape().back(), rows = xt.size() / d;
      for (std::size_t r = 0; r < rows; ++r) {
        const Dense jn = layernorm_row_jacobian(primal.aux.data().data() + r * d, primal.rstd[r], d);
        const std::vector<double> row(xt.storage().begin() + static_cast<std::ptrdiff_t>(r * d),
                                      xt.storage().begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
        const auto nt = times(jn, row);
        for (std::size_t a = 0; a < d; ++a) j(r * d + a, a) = nt[a];
      }
      break;
    }
    default:
      throw GraphError("no weight Jacobian for '" + node.id + "'");
  }
  return j;
}

/// Jacobian of a MatMul output w.r.t. operand `slot`, with the other operand
/// replaced by `other`: [y entries, operand entries].
Dense matmul_operand_jacobian(const LayerNode& node, const LayerPrimal& primal, std::size_t slot,
                              const Tensor& other) {
  const bool trans = node.attrs.transpose_right;
  const Tensor& l = primal.inputs[0];
  const Tensor& y = primal.output;
  const std::size_t batch = l.dim(0), a = l.dim(1), h = l.dim(2), c = y.dim(2);
  Dense j(y.size(), primal.inputs[slot].size());
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t col = 0; col < c; ++col) {
        const std::size_t yi = (n * a + i) * c + col;
        for (std::size_t k = 0; k < h; ++k) {
          if (slot == 0) {
            const double r = trans ? other[(n * c + col) * h + k] : other[(n * h + k) * c + col];
            j(yi, (n * a + i) * h + k) = r;
          } else {
            const std::size_t ri = trans ? (n * c + col) * h + k : (n * h + k) * c + col;
            j(yi, ri) = other[(n * a + i) * h + k];
          }
        }
      }
  return j;
}

void accumulate(LayerParams& dst, const std::vector<double>& flat, const LayerParams& delta) {
  const std::size_t nw = dst.weight.size();
  for (std::size_t k = 0; k < nw; ++k) dst.weight[k] += flat[k] * delta.weight[k];
  for (std::size_t k = 0; k < dst.bias.size(); ++k) dst.bias[k] += flat[nw + k] * delta.bias[k];
}

/// Sum over `layers` of dx/dtheta_l * delta_l.
std::vector<double> tangent_from(const ActivationJacobian& jac, const std::vector<std::size_t>& layers,
                                 const ParamTensors& delta, std::size_t entries) {
  std::vector<double> t(entries, 0.0);
  for (std::size_t l : layers) {
    const auto dl = times(jac.wrt(l), flat_params(delta[l]));
    for (std::size_t e = 0; e < entries; ++e) t[e] += dl[e];
  }
  return t;
}

}  // namespace

Tensor materialize_m(const LayerNode& node, std::size_t cap) {
  if (node.kind == LayerKind::Linear) return Tensor({1, 1, 1}, 1.0);
  if (node.kind != LayerKind::Conv2d) throw GraphError("materialize_m needs a Linear or Conv2d node");
  const std::size_t h = node.in_shapes[0][1], w = node.in_shapes[0][2];
  const std::size_t k = node.weight.dim(2);
  const std::size_t ho = node.out_shape[1], wo = node.out_shape[2];
  const std::size_t pout = ho * wo, pw = k * k, pin = h * w;
  if (pout * pw * pin > cap) throw CapExceeded("connection tensor for '" + node.id + "' exceeds the cap");
  Tensor m({pout, pw, pin});
  const auto pad = static_cast<long>(node.attrs.pad);
  const auto st = static_cast<long>(node.attrs.stride);
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          const long iy = static_cast<long>(oy) * st + static_cast<long>(ky) - pad;
          const long ix = static_cast<long>(ox) * st + static_cast<long>(kx) - pad;
          if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
          m.at(oy * wo + ox, ky * k + kx, static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) = 1.0;
        }
  return m;
}

Tensor forward_via_m(const LayerNode& node, const Tensor& x, const Tensor& m) {
  const std::size_t pout = m.dim(0), pw = m.dim(1), pin = m.dim(2);
  const std::size_t co = node.weight.dim(0), ci = node.weight.dim(1);
  if (x.size() != ci * pin) throw DimensionError("sample does not match the connection tensor");
  Tensor y(node.out_shape);
  for (std::size_t a = 0; a < co; ++a)
    for (std::size_t b = 0; b < pout; ++b) {
      double s = node.has_bias() ? node.bias[a] : 0.0;
      for (std::size_t c = 0; c < ci; ++c)
        for (std::size_t d = 0; d < pw; ++d)
          for (std::size_t e = 0; e < pin; ++e) s += node.weight[(a * ci + c) * pw + d] * x[c * pin + e] * m.at(b, d, e);
      y[a * pout + b] = s;
    }
  return y;
}

ImportanceTable oracle_dense_second_order(const NetworkGraph& g, const Tensor& batch, const Tensor& targets,
                                          const DeltaRule& rule, std::size_t cap) {
  if (g.parameter_count() > cap) {
    throw CapExceeded("dense oracle refuses " + std::to_string(g.parameter_count()) + " parameters (cap " +
                      std::to_string(cap) + ")");
  }
  const ConnectivityMap cm = connectivity(g);
  const ForwardCache cache = forward(g, batch, targets);
  const GradientRecord grad = backward(g, cache);
  const ParamTensors delta = rule.resolve(g);

  std::map<std::size_t, ActivationJacobian> jac;
  auto jacobian_of = [&](std::size_t producer) -> const ActivationJacobian& {
    auto it = jac.find(producer);
    if (it == jac.end()) it = jac.emplace(producer, ActivationJacobian(g, cache, producer)).first;
    return it->second;
  };
  auto upstream = [&](std::size_t i) {
    const Tensor& gy = grad.outputs[i];
    return gy.size() == cache.nodes[i].output.size() ? gy.storage()
                                                     : std::vector<double>(cache.nodes[i].output.size(), 0.0);
  };

  ImportanceTable t;
  t.criterion = Criterion::OBA;
  t.batches = 1;
  t.rule = rule.name();
  t.graph_hash = g.structure_hash();
  t.first_order = zeros_like_params(g);
  t.upper = zeros_like_params(g);
  t.lower = zeros_like_params(g);
  t.parallel = zeros_like_params(g);

  for (std::size_t u : g.parameter_layers()) {
    const std::size_t p = g.producers(u)[0];
    if (p == NetworkGraph::npos || cm.lower[u].empty()) continue;
    const LayerNode& node = g.node(u);
    const auto gy = upstream(u);
    const auto v = transpose_times(surrogate_jacobian(node, cache.nodes[u], delta[u].weight), gy);
    const ActivationJacobian& dx = jacobian_of(p);
    for (std::size_t l : cm.lower[u]) accumulate(t.upper[l], transpose_times(dx.wrt(l), v), delta[l]);

    const auto xhat = tangent_from(dx, cm.lower[u], delta, cache.nodes[u].inputs[0].size());
    const Tensor xt(cache.nodes[u].inputs[0].shape(), xhat);
    const auto gw = transpose_times(weight_jacobian_at(node, cache.nodes[u], xt), gy);
    for (std::size_t k = 0; k < gw.size(); ++k) t.lower[u].weight[k] += gw[k] * delta[u].weight[k];
  }

  for (const auto& par : cm.parallel) {
    const std::size_t m = par.matmul;
    const LayerNode& node = g.node(m);
    const LayerPrimal& pr = cache.nodes[m];
    const auto gy = upstream(m);
    Tensor hat[2] = {Tensor(pr.inputs[0].shape()), Tensor(pr.inputs[1].shape())};
    const std::vector<std::size_t>* sets[2] = {&par.left, &par.right};
    for (std::size_t s = 0; s < 2; ++s) {
      if (sets[s]->empty()) continue;
      hat[s] = Tensor(pr.inputs[s].shape(),
                      tangent_from(jacobian_of(g.producers(m)[s]), *sets[s], delta, pr.inputs[s].size()));
    }
    for (std::size_t s = 0; s < 2; ++s) {
      if (sets[s]->empty()) continue;
      const auto v = transpose_times(matmul_operand_jacobian(node, pr, s, hat[1 - s]), gy);
      const ActivationJacobian& dx = jacobian_of(g.producers(m)[s]);
      for (std::size_t l : *sets[s]) accumulate(t.parallel[l], transpose_times(dx.wrt(l), v), delta[l]);
    }
  }

  t.scores = t.second_order();
  return t;
}

ParamTensors oracle_true_hvp(const NetworkGraph& g, const Tensor& batch, const Tensor& targets,
                             const DeltaRule& rule) {
  const ParamTensors delta = rule.resolve(g);
  const double norm = params_norm2(delta);
  if (norm == 0.0) return zeros_like_params(g);
  const double eps = 1e-4 / norm;
  const ParamTensors theta = params_of(g);
  auto grad_at = [&](double s) {
    NetworkGraph shifted = g;
    ParamTensors p = theta;
    params_axpy(s, delta, p);
    set_params(shifted, p);
    return backward(shifted, forward(shifted, batch, targets)).params;
  };
  ParamTensors hv = grad_at(eps);
  params_axpy(-1.0, grad_at(-eps), hv);
  hv = params_scaled(hv, 1.0 / (2.0 * eps));
  for (std::size_t i = 0; i < hv.size(); ++i) {
    hv[i].weight = mul(hv[i].weight, delta[i].weight);
    hv[i].bias = mul(hv[i].bias, delta[i].bias);
  }
  return hv;
}

}  // namespace oba
