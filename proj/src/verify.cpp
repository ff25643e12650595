#include "oba/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "oba/autodiff.hpp"
#include "oba/layers.hpp"
#include "oba/model_zoo.hpp"
#include "oba/oracles.hpp"
#include "oba/params.hpp"

namespace oba {

namespace {

constexpr double kFdStep = 1e-4;

Tensor randn(const Shape& s, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(s);
  for (double& v : t.storage()) v = n(rng);
  return t;
}

Shape batched(std::size_t n, const Shape& s) {
  Shape out{n};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

LayerNode make_node(std::string id, LayerKind kind, std::vector<Shape> in, std::mt19937_64& rng,
                    Shape weight = {0}, Shape bias = {0}, LayerAttrs attrs = {}) {
  LayerNode n;
  n.id = std::move(id);
  n.kind = kind;
  n.attrs = attrs;
  if (shape_numel(weight) > 0) n.weight = randn(weight, rng);
  if (shape_numel(bias) > 0) n.bias = randn(bias, rng);
  n.in_shapes = std::move(in);
  n.out_shape = infer_output_shape(n, n.in_shapes);
  return n;
}

double scaled_error(const Tensor& a, const Tensor& ref, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - ref[i]));
  return worst / std::max(max_abs(ref), floor);
}

/// Targets matching a loss node's input, or empty for other kinds.
Tensor probe_targets(const LayerNode& node, std::size_t batch, std::mt19937_64& rng) {
  if (node.kind == LayerKind::CrossEntropyLoss) {
    Tensor t({batch});
    for (std::size_t n = 0; n < batch; ++n) t[n] = static_cast<double>(rng() % node.in_shapes[0].back());
    return t;
  }
  if (is_loss_kind(node.kind)) return randn(batched(batch, node.in_shapes[0]), rng);
  return Tensor(Shape{0});
}

bool same_branch(const LayerNode& node, const LayerPrimal& a, const LayerPrimal& b) {
  if (node.kind == LayerKind::ReLU) {
    const Tensor& x = a.inputs[0];
    const Tensor& y = b.inputs[0];
    for (std::size_t i = 0; i < x.size(); ++i)
      if ((x[i] > 0.0) != (y[i] > 0.0)) return false;
  }
  if (node.kind == LayerKind::MaxPool) return a.argmax == b.argmax;
  return true;
}

LayerNode shifted(const LayerNode& node, const LayerParams& d, double s) {
  LayerNode n = node;
  if (n.has_params()) {
    axpy(s, d.weight, n.weight);
    if (n.has_bias()) axpy(s, d.bias, n.bias);
  }
  return n;
}

std::vector<Tensor> shifted_inputs(const std::vector<Tensor>& x, const std::vector<Tensor>& t, double s) {
  std::vector<Tensor> out = x;
  for (std::size_t k = 0; k < out.size(); ++k) axpy(s, t[k], out[k]);
  return out;
}

LayerPrimal run(const LayerNode& node, std::vector<Tensor> inputs, const Tensor& targets) {
  return layer_forward(node, std::move(inputs), targets.size() ? &targets : nullptr);
}

double rel_entry(double a, double b, double floor) { return std::abs(a - b) / std::max(std::abs(b), floor); }

ParamTensors random_like(const ParamTensors& p, std::mt19937_64& rng) {
  ParamTensors out = p;
  for (auto& lp : out) {
    lp.weight = randn(lp.weight.shape(), rng);
    lp.bias = randn(lp.bias.shape(), rng);
  }
  return out;
}

bool same_graph_branch(const NetworkGraph& g, const ForwardCache& a, const ForwardCache& b) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!same_branch(g.node(i), a.nodes[i], b.nodes[i])) return false;
  return true;
}

}  // namespace

OracleSuiteResult oracle_suite(const OracleSuiteConfig& cfg, const VerifyTolerances& tol) {
  static const char* kFamilies[] = {"mlp", "cnn", "attention"};
  const auto t0 = std::chrono::steady_clock::now();
  OracleSuiteResult res;
  const DeltaRule rule = DeltaRule::param_itself();
  for (std::size_t k = 0; k < cfg.graphs; ++k) {
    const int family = static_cast<int>(k % 3);
    const std::uint64_t seed = cfg.seed + k;
    const NetworkGraph g = random_tiny_graph(seed, family);
    const Batch b = random_batch(g, cfg.batch, seed);
    const ImportanceTable got = oba_score_batch(g, b.inputs, b.targets, rule, cfg.options);
    const ImportanceTable want = oracle_dense_second_order(g, b.inputs, b.targets, rule, cfg.cap);
    const std::pair<const char*, const ParamTensors*> parts[] = {
        {"upper", &got.upper}, {"lower", &got.lower}, {"parallel", &got.parallel}};
    const ParamTensors* refs[] = {&want.upper, &want.lower, &want.parallel};
    for (std::size_t c = 0; c < 3; ++c) {
      const ParamTensors& a = *parts[c].second;
      const ParamTensors& r = *refs[c];
      for (std::size_t i = 0; i < g.size(); ++i) {
        double worst = 0.0;
        for (std::size_t q = 0; q < a[i].weight.size(); ++q)
          worst = std::max(worst, rel_entry(a[i].weight[q], r[i].weight[q], tol.floor));
        for (std::size_t q = 0; q < a[i].bias.size(); ++q)
          worst = std::max(worst, rel_entry(a[i].bias[q], r[i].bias[q], tol.floor));
        res.max_error = std::max(res.max_error, worst);
        if (worst > tol.oracle) res.mismatches.push_back({k, kFamilies[family], g.node(i).id, parts[c].first, worst});
      }
    }
    ++res.graphs;
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

std::vector<CheckResult> exactness_checks(std::uint64_t seed, const VerifyTolerances& tol) {
  struct Case {
    std::string name;
    std::string json;
  };
  const std::vector<Case> cases = {
      {"deep_linear_3", deep_linear_json({3, 4, 3, 2})},
      {"deep_linear_4", deep_linear_json({2, 3, 3, 3, 2})},
      {"bilinear", bilinear_json(3, 3, 2)},
  };
  std::vector<CheckResult> out;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const NetworkGraph g = build(cases[k].json, seed + k);
    const Batch b = random_batch(g, 4, seed + k);
    const DeltaRule rule = DeltaRule::param_itself();
    const ImportanceTable t = oba_score_batch(g, b.inputs, b.targets, rule);
    const ParamTensors second = t.second_order();
    const ParamTensors hvp = oracle_true_hvp(g, b.inputs, b.targets, rule);
    double worst = 0.0;
    std::string where;
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t q = 0; q < second[i].weight.size(); ++q) {
        const double e = rel_entry(second[i].weight[q], hvp[i].weight[q], tol.floor);
        if (e > worst) {
          worst = e;
          where = g.node(i).id;
        }
      }
    }
    out.push_back({"exactness_" + cases[k].name, worst, tol.exactness, worst <= tol.exactness,
                   where.empty() ? "" : "worst layer " + where});
  }
  return out;
}

std::vector<LayerNode> probe_nodes(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LayerAttrs conv1;
  conv1.pad = 1;
  LayerAttrs conv2;
  conv2.stride = 2;
  LayerAttrs pool;
  pool.kernel = 2;
  pool.stride = 2;
  LayerAttrs sc;
  sc.scale = 0.5;
  LayerAttrs tr;
  tr.transpose_right = true;
  std::vector<LayerNode> v;
  v.push_back(make_node("linear", LayerKind::Linear, {{4}}, rng, {5, 4}, {5}));
  v.push_back(make_node("linear_rows", LayerKind::Linear, {{3, 4}}, rng, {2, 4}, {2}));
  v.push_back(make_node("conv2d", LayerKind::Conv2d, {{2, 5, 5}}, rng, {3, 2, 3, 3}, {3}, conv1));
  v.push_back(make_node("conv2d_stride", LayerKind::Conv2d, {{2, 7, 7}}, rng, {2, 2, 3, 3}, {0}, conv2));
  v.push_back(make_node("relu", LayerKind::ReLU, {{6}}, rng));
  v.push_back(make_node("scale", LayerKind::Scale, {{5}}, rng, {0}, {0}, sc));
  v.push_back(make_node("softmax", LayerKind::Softmax, {{3, 4}}, rng));
  v.push_back(make_node("matmul", LayerKind::MatMul, {{3, 4}, {4, 2}}, rng));
  v.push_back(make_node("matmul_transposed", LayerKind::MatMul, {{3, 4}, {5, 4}}, rng, {0}, {0}, tr));
  v.push_back(make_node("add", LayerKind::Add, {{5}, {5}}, rng));
  v.push_back(make_node("flatten", LayerKind::Flatten, {{2, 3, 3}}, rng));
  v.push_back(make_node("avgpool", LayerKind::AvgPool, {{2, 4, 4}}, rng, {0}, {0}, pool));
  v.push_back(make_node("maxpool", LayerKind::MaxPool, {{2, 4, 4}}, rng, {0}, {0}, pool));
  v.push_back(make_node("layernorm", LayerKind::LayerNorm, {{3, 4}}, rng, {4}, {4}));
  v.push_back(make_node("cross_entropy", LayerKind::CrossEntropyLoss, {{5}}, rng));
  v.push_back(make_node("linear_loss", LayerKind::LinearLoss, {{3}}, rng));
  v.push_back(make_node("squared_error", LayerKind::SquaredErrorLoss, {{3}}, rng));
  return v;
}

std::vector<DirectionalCheck> layer_jvp_fd_checks(std::uint64_t seed, std::size_t draws,
                                                  const VerifyTolerances& tol) {
  constexpr std::size_t batch = 3;
  std::vector<DirectionalCheck> out;
  std::mt19937_64 rng(seed);
  for (const LayerNode& node : probe_nodes(seed)) {
    DirectionalCheck c{"jvp_fd_" + node.id};
    for (std::size_t d = 0; d < draws; ++d) {
      std::vector<Tensor> x, t;
      for (const Shape& s : node.in_shapes) {
        x.push_back(randn(batched(batch, s), rng));
        t.push_back(randn(batched(batch, s), rng));
      }
      LayerParams dtheta;
      if (node.has_params()) {
        dtheta.weight = randn(node.weight.shape(), rng);
        dtheta.bias = randn(node.bias.shape(), rng);
      }
      const Tensor targets = probe_targets(node, batch, rng);
      const LayerPrimal p0 = run(node, x, targets);
      const LayerPrimal pp = run(shifted(node, dtheta, kFdStep), shifted_inputs(x, t, kFdStep), targets);
      const LayerPrimal pm = run(shifted(node, dtheta, -kFdStep), shifted_inputs(x, t, -kFdStep), targets);
      if (!same_branch(node, p0, pp) || !same_branch(node, p0, pm)) {
        ++c.skipped;
        continue;
      }
      const Tensor jvp = layer_jvp(node, p0, t, node.has_params() ? &dtheta : nullptr);
      const Tensor fd = scale(sub(pp.output, pm.output), 0.5 / kFdStep);
      c.max_error = std::max(c.max_error, scaled_error(jvp, fd, tol.floor));
      ++c.checked;
    }
    out.push_back(c);
  }
  return out;
}

std::vector<DirectionalCheck> graph_jvp_fd_checks(std::uint64_t seed, std::size_t graphs,
                                                  const VerifyTolerances& tol) {
  std::vector<DirectionalCheck> out;
  for (std::size_t k = 0; k < graphs; ++k) {
    const std::uint64_t s = seed + k;
    const NetworkGraph g = random_tiny_graph(s, static_cast<int>(k % 3));
    const Batch b = random_batch(g, 3, s);
    std::mt19937_64 rng(s ^ 0x5bd1e995ULL);
    const ParamTensors theta = params_of(g);
    const ForwardCache c0 = forward(g, b.inputs, b.targets);

    auto fd_outputs = [&](const ParamTensors& dtheta, const Tensor* dx, DirectionalCheck& chk,
                          const std::vector<Tensor>& got) {
      NetworkGraph gp = g, gm = g;
      ParamTensors tp = theta, tm = theta;
      params_axpy(kFdStep, dtheta, tp);
      params_axpy(-kFdStep, dtheta, tm);
      set_params(gp, tp);
      set_params(gm, tm);
      Tensor xp = b.inputs, xm = b.inputs;
      if (dx) {
        axpy(kFdStep, *dx, xp);
        axpy(-kFdStep, *dx, xm);
      }
      const ForwardCache cp = forward(gp, xp, b.targets);
      const ForwardCache cm = forward(gm, xm, b.targets);
      if (!same_graph_branch(g, c0, cp) || !same_graph_branch(g, c0, cm)) {
        ++chk.skipped;
        return;
      }
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Tensor fd = scale(sub(cp.nodes[i].output, cm.nodes[i].output), 0.5 / kFdStep);
        const Tensor zero(fd.shape());
        chk.max_error = std::max(chk.max_error, scaled_error(got[i].size() ? got[i] : zero, fd, tol.floor));
      }
      ++chk.checked;
    };

    const std::string tag = "graph" + std::to_string(k);
    DirectionalCheck sweep{"jvp_fd_" + tag};
    for (int d = 0; d < 3; ++d) {
      const ParamTensors dtheta = random_like(theta, rng);
      const Tensor dx = randn(b.inputs.shape(), rng);
      const TangentRecord tr = jvp_sweep(g, c0, dtheta, &dx);
      fd_outputs(dtheta, &dx, sweep, tr.outputs);
    }
    out.push_back(sweep);

    DirectionalCheck jf{"jvpf_fd_" + tag};
    const TangentRecord tr = jvpf_run(g, c0, DeltaRule::param_itself());
    fd_outputs(theta, nullptr, jf, tr.outputs);
    out.push_back(jf);
  }
  return out;
}

std::vector<DirectionalCheck> adjoint_checks(std::uint64_t seed, std::size_t draws, const VerifyTolerances& tol) {
  constexpr std::size_t batch = 2;
  std::vector<DirectionalCheck> out;
  std::mt19937_64 rng(seed + 17);
  for (const LayerNode& node : probe_nodes(seed)) {
    DirectionalCheck c{"adjoint_" + node.id};
    for (std::size_t d = 0; d < draws; ++d) {
      std::vector<Tensor> x, v;
      for (const Shape& s : node.in_shapes) {
        x.push_back(randn(batched(batch, s), rng));
        v.push_back(randn(batched(batch, s), rng));
      }
      LayerParams vt;
      if (node.has_params()) {
        vt.weight = randn(node.weight.shape(), rng);
        vt.bias = randn(node.bias.shape(), rng);
      }
      const Tensor targets = probe_targets(node, batch, rng);
      const LayerPrimal p = run(node, x, targets);
      const Tensor u = randn(p.output.shape(), rng);
      const double lhs = dot(u, layer_jvp(node, p, v, node.has_params() ? &vt : nullptr));
      const LayerVjp back = layer_vjp(node, p, u);
      double rhs = 0.0;
      for (std::size_t s = 0; s < v.size(); ++s) rhs += dot(back.inputs[s], v[s]);
      if (node.has_params()) {
        rhs += dot(back.params.weight, vt.weight);
        if (node.has_bias()) rhs += dot(back.params.bias, vt.bias);
      }
      const double e = std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), tol.floor});
      c.max_error = std::max(c.max_error, e);
      ++c.checked;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace oba
