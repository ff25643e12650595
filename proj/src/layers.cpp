#include "oba/layers.hpp"

#include <cmath>

#include "oba/errors.hpp"

namespace oba {

namespace {

Shape with_batch(std::size_t n, const Shape& per_sample) {
  Shape s{n};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

Shape per_sample_shape(const Tensor& t) { return Shape(t.shape().begin() + 1, t.shape().end()); }

Tensor sample_of(const Tensor& t, std::size_t n) {
  const std::size_t per = t.size() / t.dim(0);
  const auto first = t.storage().begin() + static_cast<std::ptrdiff_t>(n * per);
  return Tensor(per_sample_shape(t), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(per)));
}

void put_sample(Tensor& t, std::size_t n, const Tensor& s) {
  const std::size_t per = t.size() / t.dim(0);
  std::copy(s.storage().begin(), s.storage().end(), t.storage().begin() + static_cast<std::ptrdiff_t>(n * per));
}

[[noreturn]] void fail(const LayerNode& node, const std::string& what) {
  throw DimensionError("node '" + node.id + "' (" + std::string(kind_name(node.kind)) + "): " + what);
}

void require_primal_input(const LayerNode& node, const LayerPrimal& primal, std::size_t slots) {
  if (primal.inputs.size() < slots) fail(node, "missing primal input in cache");
}

// --- MatMul helpers: left [N,a,h], right [N,h,c] (or [N,c,h] when transposed).

Tensor batched_matmul(const Tensor& l, const Tensor& r, bool trans) {
  const std::size_t n = l.dim(0), a = l.dim(1), h = l.dim(2);
  const std::size_t c = trans ? r.dim(1) : r.dim(2);
  Tensor y({n, a, c});
  for (std::size_t s = 0; s < n; ++s) {
    const double* lp = l.data().data() + s * a * h;
    const double* rp = r.data().data() + s * h * c;
    double* yp = y.data().data() + s * a * c;
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < h; ++k) acc += lp[i * h + k] * (trans ? rp[j * h + k] : rp[k * c + j]);
        yp[i * c + j] = acc;
      }
  }
  return y;
}

Tensor matmul_grad_left(const Tensor& g, const Tensor& r, bool trans, const Shape& l_shape) {
  const std::size_t n = l_shape[0], a = l_shape[1], h = l_shape[2];
  const std::size_t c = g.dim(2);
  Tensor gl(l_shape);
  for (std::size_t s = 0; s < n; ++s) {
    const double* gp = g.data().data() + s * a * c;
    const double* rp = r.data().data() + s * h * c;
    double* out = gl.data().data() + s * a * h;
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t k = 0; k < h; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += gp[i * c + j] * (trans ? rp[j * h + k] : rp[k * c + j]);
        out[i * h + k] = acc;
      }
  }
  return gl;
}

Tensor matmul_grad_right(const Tensor& l, const Tensor& g, bool trans, const Shape& r_shape) {
  const std::size_t n = l.dim(0), a = l.dim(1), h = l.dim(2);
  const std::size_t c = g.dim(2);
  Tensor gr(r_shape);
  for (std::size_t s = 0; s < n; ++s) {
    const double* lp = l.data().data() + s * a * h;
    const double* gp = g.data().data() + s * a * c;
    double* out = gr.data().data() + s * h * c;
    for (std::size_t k = 0; k < h; ++k)
      for (std::size_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a; ++i) acc += lp[i * h + k] * gp[i * c + j];
        if (trans) {
          out[j * h + k] = acc;
        } else {
          out[k * c + j] = acc;
        }
      }
  }
  return gr;
}

// --- LayerNorm helpers over the last axis.

/// rstd * (v - mean(v) - n * mean(n*v)) per row; the normalization Jacobian
/// is symmetric so this serves both JVP and VJP.
Tensor layernorm_jacobian_apply(const Tensor& normalized, const Tensor& rstd, const Tensor& v) {
  const std::size_t d = normalized.shape().back();
  const std::size_t rows = normalized.size() / d;
  Tensor out(v.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* np = normalized.data().data() + r * d;
    const double* vp = v.data().data() + r * d;
    double mv = 0.0, mnv = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      mv += vp[i];
      mnv += np[i] * vp[i];
    }
    mv /= static_cast<double>(d);
    mnv /= static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = rstd[r] * (vp[i] - mv - np[i] * mnv);
  }
  return out;
}

std::size_t pool_index(std::size_t c, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
  return (c * h + y) * w + x;
}

}  // namespace

std::size_t feature_axis(const Shape& per_sample) {
  if (per_sample.empty()) return 0;
  return per_sample.size() == 3 ? 0 : per_sample.size() - 1;
}

LayerPrimal layer_forward(const LayerNode& node, std::vector<Tensor> inputs, const Tensor* targets) {
  LayerPrimal p;
  p.inputs = std::move(inputs);
  if (p.inputs.size() != node.in_shapes.size()) fail(node, "wrong number of inputs");
  for (std::size_t s = 0; s < p.inputs.size(); ++s) {
    if (p.inputs[s].rank() == 0 || per_sample_shape(p.inputs[s]) != node.in_shapes[s]) {
      fail(node, "input " + std::to_string(s) + " has shape " + shape_to_string(p.inputs[s].shape()) +
                     ", expected batch x " + shape_to_string(node.in_shapes[s]));
    }
  }
  const Tensor& x = p.inputs[0];
  const std::size_t batch = x.dim(0);
  switch (node.kind) {
    case LayerKind::Linear: {
      const Tensor& w = node.weight;
      const std::size_t out = w.dim(0), in = w.dim(1), rows = x.size() / in;
      Shape ys = x.shape();
      ys.back() = out;
      p.output = Tensor(ys);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o) {
          double acc = 0.0;
          for (std::size_t c = 0; c < in; ++c) acc += w[o * in + c] * x[r * in + c];
          p.output[r * out + o] = acc + (node.has_bias() ? node.bias[o] : 0.0);
        }
      break;
    }
    case LayerKind::Conv2d: {
      p.output = Tensor(with_batch(batch, node.out_shape));
      for (std::size_t n = 0; n < batch; ++n)
        put_sample(p.output, n, conv2d(sample_of(x, n), node.weight, node.bias, node.attrs.stride, node.attrs.pad));
      break;
    }
    case LayerKind::ReLU:
      p.output = relu(x);
      break;
    case LayerKind::Scale:
      p.output = scale(x, node.attrs.scale);
      break;
    case LayerKind::Softmax: {
      const std::size_t d = x.shape().back();
      p.output = softmax_rows(x.reshaped({x.size() / d, d})).reshaped(x.shape());
      p.aux = p.output;
      break;
    }
    case LayerKind::MatMul:
      p.output = batched_matmul(p.inputs[0], p.inputs[1], node.attrs.transpose_right);
      break;
    case LayerKind::Add: {
      p.output = p.inputs[0];
      for (std::size_t s = 1; s < p.inputs.size(); ++s) p.output = add(p.output, p.inputs[s]);
      break;
    }
    case LayerKind::Flatten:
      p.output = x.reshaped(with_batch(batch, node.out_shape));
      break;
    case LayerKind::AvgPool:
    case LayerKind::MaxPool: {
      const std::size_t ch = node.in_shapes[0][0], h = node.in_shapes[0][1], w = node.in_shapes[0][2];
      const std::size_t ho = node.out_shape[1], wo = node.out_shape[2];
      const std::size_t k = node.attrs.kernel, st = node.attrs.stride;
      const bool is_max = node.kind == LayerKind::MaxPool;
      p.output = Tensor(with_batch(batch, node.out_shape));
      if (is_max) p.argmax.assign(p.output.size(), 0);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const std::size_t o = ((n * ch + c) * ho + oy) * wo + ox;
              double acc = 0.0, best = 0.0;
              std::size_t best_idx = 0;
              bool first = true;
              for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const std::size_t i = n * ch * h * w + pool_index(c, oy * st + ky, ox * st + kx, h, w);
                  if (is_max) {
                    if (first || x[i] > best) {
                      best = x[i];
                      best_idx = i;
                      first = false;
                    }
                  } else {
                    acc += x[i];
                  }
                }
              if (is_max) {
                p.output[o] = best;
                p.argmax[o] = best_idx;
              } else {
                p.output[o] = acc / static_cast<double>(k * k);
              }
            }
      break;
    }
    case LayerKind::LayerNorm: {
      const std::size_t d = x.shape().back(), rows = x.size() / d;
      p.aux = Tensor(x.shape());
      p.rstd = Tensor({rows});
      p.output = Tensor(x.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t i = 0; i < d; ++i) mean += x[r * d + i];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (x[r * d + i] - mean) * (x[r * d + i] - mean);
        var /= static_cast<double>(d);
        const double rs = 1.0 / std::sqrt(var + node.attrs.eps);
        p.rstd[r] = rs;
        for (std::size_t i = 0; i < d; ++i) {
          const double nv = (x[r * d + i] - mean) * rs;
          p.aux[r * d + i] = nv;
          p.output[r * d + i] = node.weight[i] * nv + node.bias[i];
        }
      }
      break;
    }
    case LayerKind::CrossEntropyLoss: {
      if (!targets || targets->shape() != Shape{batch}) fail(node, "cross entropy needs one label per sample");
      const std::size_t classes = x.dim(1);
      p.aux = softmax_rows(x);
      double total = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const double label = (*targets)[n];
        if (label < 0 || label >= static_cast<double>(classes) || label != std::floor(label)) {
          fail(node, "label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
        }
        const std::size_t t = static_cast<std::size_t>(label);
        // log-sum-exp form keeps the value finite for saturated rows.
        const double* row = x.data().data() + n * classes;
        double mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
        total += std::log(z) + mx - row[t];
      }
      p.output = Tensor::scalar(total / static_cast<double>(batch));
      p.targets = *targets;
      break;
    }
    case LayerKind::LinearLoss:
    case LayerKind::SquaredErrorLoss: {
      if (!targets || !targets->same_shape(x)) fail(node, "targets must match the loss input shape");
      double total = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        total += node.kind == LayerKind::LinearLoss ? (*targets)[i] * x[i]
                                                    : 0.5 * (x[i] - (*targets)[i]) * (x[i] - (*targets)[i]);
      }
      p.output = Tensor::scalar(total / static_cast<double>(batch));
      p.targets = *targets;
      break;
    }
  }
  return p;
}

LayerVjp layer_vjp(const LayerNode& node, const LayerPrimal& primal, const Tensor& g) {
  require_primal_input(node, primal, node.in_shapes.size());
  if (!g.same_shape(primal.output)) {
    fail(node, "upstream " + shape_to_string(g.shape()) + " does not match output " +
                   shape_to_string(primal.output.shape()));
  }
  LayerVjp r;
  const Tensor& x = primal.inputs[0];
  const std::size_t batch = x.dim(0);
  switch (node.kind) {
    case LayerKind::Linear: {
      const Tensor& w = node.weight;
      const std::size_t out = w.dim(0), in = w.dim(1), rows = x.size() / in;
      Tensor gx(x.shape());
      Tensor gw(w.shape());
      Tensor gb(node.bias.shape());
      for (std::size_t row = 0; row < rows; ++row)
        for (std::size_t o = 0; o < out; ++o) {
          const double up = g[row * out + o];
          if (node.has_bias()) gb[o] += up;
          for (std::size_t c = 0; c < in; ++c) {
            gx[row * in + c] += w[o * in + c] * up;
            gw[o * in + c] += up * x[row * in + c];
          }
        }
      r.inputs.push_back(std::move(gx));
      r.params = {std::move(gw), std::move(gb)};
      break;
    }
    case LayerKind::Conv2d: {
      Tensor gx(x.shape());
      Tensor gw(node.weight.shape());
      Tensor gb(node.bias.shape());
      for (std::size_t n = 0; n < batch; ++n) {
        const Tensor gy = sample_of(g, n);
        put_sample(gx, n, conv2d_input_grad(gy, node.weight, node.in_shapes[0], node.attrs.stride, node.attrs.pad));
        conv2d_weight_grad_accumulate(sample_of(x, n), gy, gw, node.attrs.stride, node.attrs.pad);
        if (node.has_bias()) {
          const std::size_t per = gy.size() / gy.dim(0);
          for (std::size_t o = 0; o < gy.dim(0); ++o)
            for (std::size_t i = 0; i < per; ++i) gb[o] += gy[o * per + i];
        }
      }
      r.inputs.push_back(std::move(gx));
      r.params = {std::move(gw), std::move(gb)};
      break;
    }
    case LayerKind::ReLU: {
      Tensor gx(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? g[i] : 0.0;
      r.inputs.push_back(std::move(gx));
      break;
    }
    case LayerKind::Scale:
      r.inputs.push_back(scale(g, node.attrs.scale));
      break;
    case LayerKind::Softmax: {
      if (primal.aux.size() != x.size()) fail(node, "missing softmax probabilities in cache");
      const Tensor& pr = primal.aux;
      const std::size_t d = x.shape().back(), rows = x.size() / d;
      Tensor gx(x.shape());
      for (std::size_t row = 0; row < rows; ++row) {
        double inner = 0.0;
        for (std::size_t i = 0; i < d; ++i) inner += g[row * d + i] * pr[row * d + i];
        for (std::size_t i = 0; i < d; ++i) gx[row * d + i] = pr[row * d + i] * (g[row * d + i] - inner);
      }
      r.inputs.push_back(std::move(gx));
      break;
    }
    case LayerKind::MatMul: {
      const bool t = node.attrs.transpose_right;
      r.inputs.push_back(matmul_grad_left(g, primal.inputs[1], t, primal.inputs[0].shape()));
      r.inputs.push_back(matmul_grad_right(primal.inputs[0], g, t, primal.inputs[1].shape()));
      break;
    }
    case LayerKind::Add:
      for (std::size_t s = 0; s < primal.inputs.size(); ++s) r.inputs.push_back(g);
      break;
    case LayerKind::Flatten:
      r.inputs.push_back(g.reshaped(x.shape()));
      break;
    case LayerKind::AvgPool: {
      const std::size_t ch = node.in_shapes[0][0], h = node.in_shapes[0][1], w = node.in_shapes[0][2];
      const std::size_t ho = node.out_shape[1], wo = node.out_shape[2];
      const std::size_t k = node.attrs.kernel, st = node.attrs.stride;
      const double inv = 1.0 / static_cast<double>(k * k);
      Tensor gx(x.shape());
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const double up = g[((n * ch + c) * ho + oy) * wo + ox] * inv;
              for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx)
                  gx[n * ch * h * w + pool_index(c, oy * st + ky, ox * st + kx, h, w)] += up;
            }
      r.inputs.push_back(std::move(gx));
      break;
    }
    case LayerKind::MaxPool: {
      if (primal.argmax.size() != primal.output.size()) fail(node, "missing max-pool argmax in cache");
      Tensor gx(x.shape());
      for (std::size_t o = 0; o < g.size(); ++o) gx[primal.argmax[o]] += g[o];
      r.inputs.push_back(std::move(gx));
      break;
    }
    case LayerKind::LayerNorm: {
      const std::size_t d = x.shape().back(), rows = x.size() / d;
      Tensor gn(x.shape());
      Tensor gw(node.weight.shape());
      Tensor gb(node.bias.shape());
      for (std::size_t row = 0; row < rows; ++row)
        for (std::size_t i = 0; i < d; ++i) {
          const double up = g[row * d + i];
          gn[row * d + i] = node.weight[i] * up;
          gw[i] += up * primal.aux[row * d + i];
          gb[i] += up;
        }
      r.inputs.push_back(layernorm_jacobian_apply(primal.aux, primal.rstd, gn));
      r.params = {std::move(gw), std::move(gb)};
      break;
    }
    case LayerKind::CrossEntropyLoss: {
      const double up = g.item() / static_cast<double>(batch);
      const std::size_t classes = x.dim(1);
      Tensor gx = scale(primal.aux, up);
      for (std::size_t n = 0; n < batch; ++n)
        gx[n * classes + static_cast<std::size_t>(primal.targets[n])] -= up;
      r.inputs.push_back(std::move(gx));
      break;
    }
    case LayerKind::LinearLoss:
      r.inputs.push_back(scale(primal.targets, g.item() / static_cast<double>(batch)));
      break;
    case LayerKind::SquaredErrorLoss:
      r.inputs.push_back(scale(sub(x, primal.targets), g.item() / static_cast<double>(batch)));
      break;
  }
  return r;
}

Tensor layer_jvp(const LayerNode& node, const LayerPrimal& primal, std::span<const Tensor> xt,
                 const LayerParams* dtheta) {
  if (dtheta && !node.has_params()) fail(node, "parameter tangent given to a nonparameter layer");
  if (xt.size() != node.in_shapes.size()) fail(node, "wrong number of input tangents");
  const Tensor& t = xt[0];
  switch (node.kind) {
    case LayerKind::Linear: {
      require_primal_input(node, primal, 1);
      const Tensor& x = primal.inputs[0];
      const Tensor& w = node.weight;
      const std::size_t out = w.dim(0), in = w.dim(1), rows = t.size() / in;
      Shape ys = t.shape();
      ys.back() = out;
      Tensor y(ys);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o) {
          double acc = 0.0;
          for (std::size_t c = 0; c < in; ++c) acc += w[o * in + c] * t[r * in + c];
          if (dtheta) {
            for (std::size_t c = 0; c < in; ++c) acc += dtheta->weight[o * in + c] * x[r * in + c];
            if (node.has_bias()) acc += dtheta->bias[o];
          }
          y[r * out + o] = acc;
        }
      return y;
    }
    case LayerKind::Conv2d: {
      const std::size_t batch = t.dim(0);
      Tensor y(with_batch(batch, node.out_shape));
      const Tensor no_bias(Shape{0});
      for (std::size_t n = 0; n < batch; ++n) {
        Tensor yn = conv2d(sample_of(t, n), node.weight, no_bias, node.attrs.stride, node.attrs.pad);
        if (dtheta) {
          require_primal_input(node, primal, 1);
          yn = add(yn, conv2d(sample_of(primal.inputs[0], n), dtheta->weight,
                              node.has_bias() ? dtheta->bias : no_bias, node.attrs.stride, node.attrs.pad));
        }
        put_sample(y, n, yn);
      }
      return y;
    }
    case LayerKind::ReLU: {
      require_primal_input(node, primal, 1);
      const Tensor& x = primal.inputs[0];
      Tensor y(t.shape());
      for (std::size_t i = 0; i < t.size(); ++i) y[i] = x[i] > 0.0 ? t[i] : 0.0;
      return y;
    }
    case LayerKind::Scale:
      return scale(t, node.attrs.scale);
    case LayerKind::Softmax: {
      if (primal.aux.size() != t.size()) fail(node, "missing softmax probabilities in cache");
      const Tensor& pr = primal.aux;
      const std::size_t d = t.shape().back(), rows = t.size() / d;
      Tensor y(t.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        double inner = 0.0;
        for (std::size_t i = 0; i < d; ++i) inner += pr[r * d + i] * t[r * d + i];
        for (std::size_t i = 0; i < d; ++i) y[r * d + i] = pr[r * d + i] * (t[r * d + i] - inner);
      }
      return y;
    }
    case LayerKind::MatMul: {
      require_primal_input(node, primal, 2);
      const bool tr = node.attrs.transpose_right;
      return add(batched_matmul(xt[0], primal.inputs[1], tr), batched_matmul(primal.inputs[0], xt[1], tr));
    }
    case LayerKind::Add: {
      Tensor y = xt[0];
      for (std::size_t s = 1; s < xt.size(); ++s) y = add(y, xt[s]);
      return y;
    }
    case LayerKind::Flatten:
      return t.reshaped(with_batch(t.dim(0), node.out_shape));
    case LayerKind::AvgPool: {
      LayerNode shadow = node;
      return layer_forward(shadow, {t}).output;
    }
    case LayerKind::MaxPool: {
      if (primal.argmax.empty()) fail(node, "missing max-pool argmax in cache");
      Tensor y(with_batch(t.dim(0), node.out_shape));
      for (std::size_t o = 0; o < y.size(); ++o) y[o] = t[primal.argmax[o]];
      return y;
    }
    case LayerKind::LayerNorm: {
      if (primal.aux.size() != t.size()) fail(node, "missing normalized input in cache");
      Tensor core = layernorm_jacobian_apply(primal.aux, primal.rstd, t);
      const std::size_t d = t.shape().back(), rows = t.size() / d;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < d; ++i) {
          double v = node.weight[i] * core[r * d + i];
          if (dtheta) v += dtheta->weight[i] * primal.aux[r * d + i] + dtheta->bias[i];
          core[r * d + i] = v;
        }
      return core;
    }
    case LayerKind::CrossEntropyLoss: {
      if (primal.aux.size() != t.size() || primal.targets.size() != t.dim(0)) fail(node, "missing loss cache");
      const std::size_t batch = t.dim(0), classes = t.dim(1);
      double acc = 0.0;
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < classes; ++c) {
          const double onehot = static_cast<std::size_t>(primal.targets[n]) == c ? 1.0 : 0.0;
          acc += (primal.aux[n * classes + c] - onehot) * t[n * classes + c];
        }
      return Tensor::scalar(acc / static_cast<double>(batch));
    }
    case LayerKind::LinearLoss:
    case LayerKind::SquaredErrorLoss: {
      if (!primal.targets.same_shape(t)) fail(node, "missing loss targets in cache");
      double acc = 0.0;
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double slope =
            node.kind == LayerKind::LinearLoss ? primal.targets[i] : primal.inputs.at(0)[i] - primal.targets[i];
        acc += slope * t[i];
      }
      return Tensor::scalar(acc / static_cast<double>(t.dim(0)));
    }
  }
  fail(node, "unhandled kind");
}

Tensor vjp_with_surrogate_weights(const LayerNode& node, const LayerPrimal& primal, const Tensor& g,
                                  const Tensor& surrogate) {
  if (!node.has_params()) fail(node, "surrogate-weight VJP needs a parameter layer");
  if (!surrogate.same_shape(node.weight)) fail(node, "surrogate does not match the weight shape");
  require_primal_input(node, primal, 1);
  const Tensor& x = primal.inputs[0];
  switch (node.kind) {
    case LayerKind::Linear: {
      const std::size_t out = surrogate.dim(0), in = surrogate.dim(1), rows = x.size() / in;
      Tensor gx(x.shape());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o) {
          const double up = g[r * out + o];
          for (std::size_t c = 0; c < in; ++c) gx[r * in + c] += surrogate[o * in + c] * up;
        }
      return gx;
    }
    case LayerKind::Conv2d: {
      Tensor gx(x.shape());
      for (std::size_t n = 0; n < x.dim(0); ++n)
        put_sample(gx, n,
                   conv2d_input_grad(sample_of(g, n), surrogate, node.in_shapes[0], node.attrs.stride, node.attrs.pad));
      return gx;
    }
    case LayerKind::LayerNorm: {
      const std::size_t d = x.shape().back(), rows = x.size() / d;
      Tensor gn(x.shape());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < d; ++i) gn[r * d + i] = surrogate[i] * g[r * d + i];
      return layernorm_jacobian_apply(primal.aux, primal.rstd, gn);
    }
    default:
      fail(node, "unhandled parameter kind");
  }
}

Tensor weight_grad_at_input_tangent(const LayerNode& node, const LayerPrimal& primal, const Tensor& xt,
                                    const Tensor& g) {
  if (!node.has_params()) fail(node, "weight gradient needs a parameter layer");
  switch (node.kind) {
    case LayerKind::Linear: {
      const std::size_t out = node.weight.dim(0), in = node.weight.dim(1), rows = xt.size() / in;
      Tensor gw(node.weight.shape());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o) {
          const double up = g[r * out + o];
          for (std::size_t c = 0; c < in; ++c) gw[o * in + c] += up * xt[r * in + c];
        }
      return gw;
    }
    case LayerKind::Conv2d: {
      Tensor gw(node.weight.shape());
      for (std::size_t n = 0; n < xt.dim(0); ++n)
        conv2d_weight_grad_accumulate(sample_of(xt, n), sample_of(g, n), gw, node.attrs.stride, node.attrs.pad);
      return gw;
    }
    case LayerKind::LayerNorm: {
      const Tensor core = layernorm_jacobian_apply(primal.aux, primal.rstd, xt);
      const std::size_t d = xt.shape().back(), rows = xt.size() / d;
      Tensor gw(node.weight.shape());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < d; ++i) gw[i] += g[r * d + i] * core[r * d + i];
      return gw;
    }
    default:
      fail(node, "unhandled parameter kind");
  }
}

}  // namespace oba
