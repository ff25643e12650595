#include "oba/scoring.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

#include "oba/autodiff.hpp"
#include "oba/connectivity.hpp"
#include "oba/errors.hpp"
#include "oba/network_io.hpp"

namespace oba {

namespace {

bool present(const Tensor& t) { return !(t.rank() == 1 && t.dim(0) == 0); }

ParamTensors hadamard(const ParamTensors& a, const ParamTensors& b) {
  ParamTensors out = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i].weight = mul(a[i].weight, b[i].weight);
    out[i].bias = mul(a[i].bias, b[i].bias);
  }
  return out;
}

ParamTensors sum_params(std::initializer_list<const ParamTensors*> parts) {
  ParamTensors out = **parts.begin();
  for (auto it = parts.begin() + 1; it != parts.end(); ++it) params_axpy(1.0, **it, out);
  return out;
}

void add_seed(std::vector<Tensor>& seeds, std::size_t node, Tensor value) {
  if (node == NetworkGraph::npos) return;
  if (present(seeds[node])) {
    axpy(1.0, value, seeds[node]);
  } else {
    seeds[node] = std::move(value);
  }
}

ImportanceTable blank(const NetworkGraph& g, Criterion c) {
  ImportanceTable t;
  t.criterion = c;
  t.graph_hash = g.structure_hash();
  t.scores = zeros_like_params(g);
  return t;
}

std::vector<std::pair<std::string, const ParamTensors*>> sections(const ImportanceTable& t) {
  std::vector<std::pair<std::string, const ParamTensors*>> s{{"", &t.scores}};
  if (t.has_components()) {
    s.emplace_back(".first_order", &t.first_order);
    s.emplace_back(".upper", &t.upper);
    s.emplace_back(".lower", &t.lower);
    s.emplace_back(".parallel", &t.parallel);
  }
  return s;
}

}  // namespace

std::string_view criterion_name(Criterion c) {
  switch (c) {
    case Criterion::OBA:
      return "oba";
    case Criterion::Taylor:
      return "taylor";
    case Criterion::Weight:
      return "weight";
    case Criterion::OBD:
      return "obd";
    case Criterion::Random:
      return "random";
  }
  return "?";
}

Criterion parse_criterion(std::string_view name) {
  for (Criterion c : {Criterion::OBA, Criterion::Taylor, Criterion::Weight, Criterion::OBD, Criterion::Random})
    if (criterion_name(c) == name) return c;
  throw ConfigError("unknown criterion '" + std::string(name) + "'");
}

ParamTensors ImportanceTable::second_order() const {
  if (!has_components()) throw ConfigError("table has no second-order decomposition");
  return sum_params({&upper, &lower, &parallel});
}

ImportanceTable oba_score_batch(const NetworkGraph& g, const Tensor& batch, const Tensor& targets,
                                const DeltaRule& rule, const ScoreOptions& opts) {
  require_supported(g);
  const ForwardCache cache = forward(g, batch, targets);
  const GradientRecord grad = backward(g, cache);
  const ParamTensors delta = rule.resolve(g);
  const std::size_t n = g.size();

  ImportanceTable t = blank(g, Criterion::OBA);
  t.batches = 1;
  t.rule = rule.name();
  t.first_order = hadamard(grad.params, delta);

  // Upper series: each layer's surrogate-weight cotangent enters at its input.
  std::vector<Tensor> seeds(n, Tensor(Shape{0}));
  for (std::size_t u : g.parameter_layers()) {
    if (!present(grad.outputs[u])) continue;
    add_seed(seeds, g.producers(u)[0],
             vjp_with_surrogate_weights(g.node(u), cache.nodes[u], grad.outputs[u], delta[u].weight));
  }
  t.upper = hadamard(reverse_sweep(g, cache, seeds, false).params, delta);

  // Lower series.
  const TangentRecord tan = jvpf_run(g, cache, rule);
  t.lower = zeros_like_params(g);
  for (std::size_t l : g.parameter_layers()) {
    if (!present(grad.outputs[l])) continue;
    const Tensor w = weight_grad_at_input_tangent(g.node(l), cache.nodes[l], tan.inputs[l][0], grad.outputs[l]);
    t.lower[l].weight = mul(w, delta[l].weight);
  }

  // Parallel: each MatMul operand's cotangent with the other operand replaced
  // by its tangent.
  std::fill(seeds.begin(), seeds.end(), Tensor(Shape{0}));
  for (std::size_t m = 0; m < n; ++m) {
    if (g.node(m).kind != LayerKind::MatMul || !present(grad.outputs[m])) continue;
    LayerPrimal left_hat = cache.nodes[m];
    left_hat.inputs[0] = tan.inputs[m][0];
    LayerPrimal right_hat = cache.nodes[m];
    right_hat.inputs[1] = tan.inputs[m][1];
    add_seed(seeds, g.producers(m)[1], layer_vjp(g.node(m), left_hat, grad.outputs[m]).inputs[1]);
    add_seed(seeds, g.producers(m)[0], layer_vjp(g.node(m), right_hat, grad.outputs[m]).inputs[0]);
  }
  t.parallel = params_scaled(hadamard(reverse_sweep(g, cache, seeds, false).params, delta), opts.parallel_sign);

  t.scores = sum_params({&t.first_order, &t.upper, &t.lower, &t.parallel});
  return t;
}

ImportanceTable mean_tables(std::span<const ImportanceTable> tables) {
  if (tables.empty()) throw DataError("no tables to average");
  ImportanceTable out = tables[0];
  const double inv = 1.0 / static_cast<double>(tables.size());
  auto average = [&](ParamTensors ImportanceTable::*field) {
    if ((out.*field).empty()) return;
    ParamTensors acc = tables[0].*field;
    for (std::size_t b = 1; b < tables.size(); ++b) params_axpy(1.0, tables[b].*field, acc);
    out.*field = params_scaled(acc, inv);
  };
  average(&ImportanceTable::scores);
  average(&ImportanceTable::first_order);
  average(&ImportanceTable::upper);
  average(&ImportanceTable::lower);
  average(&ImportanceTable::parallel);
  out.batches = 0;
  for (const auto& t : tables) out.batches += t.batches;
  out.aggregated = tables.size() > 1;
  return out;
}

ImportanceTable oba_importance(const NetworkGraph& g, std::span<const Batch> batches, const DeltaRule& rule,
                               const ScoreOptions& opts) {
  if (batches.empty()) throw DataError("OBA importance needs at least one batch");
  std::vector<ImportanceTable> per;
  for (const auto& b : batches) per.push_back(oba_score_batch(g, b.inputs, b.targets, rule, opts));
  return mean_tables(per);
}

ImportanceTable taylor_importance(const NetworkGraph& g, std::span<const Batch> batches) {
  if (batches.empty()) throw DataError("Taylor importance needs at least one batch");
  const ParamTensors theta = params_of(g);
  std::vector<ImportanceTable> per;
  for (const auto& b : batches) {
    ImportanceTable t = blank(g, Criterion::Taylor);
    t.batches = 1;
    const GradientRecord gr = backward(g, forward(g, b.inputs, b.targets));
    t.scores = hadamard(gr.params, theta);
    for (auto& p : t.scores) {
      for (double& v : p.weight.storage()) v = std::abs(v);
      for (double& v : p.bias.storage()) v = std::abs(v);
    }
    per.push_back(std::move(t));
  }
  return mean_tables(per);
}

ImportanceTable weight_importance(const NetworkGraph& g) {
  ImportanceTable t = blank(g, Criterion::Weight);
  t.scores = params_of(g);
  for (auto& p : t.scores) {
    for (double& v : p.weight.storage()) v = std::abs(v);
    for (double& v : p.bias.storage()) v = std::abs(v);
  }
  return t;
}

ImportanceTable obd_importance(const NetworkGraph& g, std::span<const Batch> batches, std::size_t cap) {
  if (batches.empty()) throw DataError("OBD importance needs at least one batch");
  if (g.parameter_count() > cap) {
    throw CapExceeded("OBD diagonal needs " + std::to_string(g.parameter_count()) +
                      " finite-difference probes; cap is " + std::to_string(cap));
  }
  std::vector<ImportanceTable> per;
  NetworkGraph work = g;
  for (const auto& b : batches) {
    ImportanceTable t = blank(g, Criterion::OBD);
    t.batches = 1;
    for (std::size_t i : g.parameter_layers()) {
      for (int part = 0; part < 2; ++part) {
        Tensor& param = part == 0 ? work.weight(i) : work.bias(i);
        Tensor& out = part == 0 ? t.scores[i].weight : t.scores[i].bias;
        for (std::size_t q = 0; q < param.size(); ++q) {
          const double theta = param[q];
          const double eps = 1e-4 * std::max(1.0, std::abs(theta));
          auto grad_at = [&](double v) {
            param[q] = v;
            const GradientRecord gr = backward(work, forward(work, b.inputs, b.targets));
            return part == 0 ? gr.params[i].weight[q] : gr.params[i].bias[q];
          };
          const double hqq = (grad_at(theta + eps) - grad_at(theta - eps)) / (2.0 * eps);
          param[q] = theta;
          out[q] = 0.5 * theta * theta * hqq;
        }
      }
    }
    per.push_back(std::move(t));
  }
  return mean_tables(per);
}

ImportanceTable random_importance(const NetworkGraph& g, std::uint64_t seed) {
  ImportanceTable t = blank(g, Criterion::Random);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& p : t.scores) {
    for (double& v : p.weight.storage()) v = u(rng);
    for (double& v : p.bias.storage()) v = u(rng);
  }
  return t;
}

ImportanceTable compute_importance(Criterion c, const NetworkGraph& g, std::span<const Batch> batches,
                                   const DeltaRule& rule, std::uint64_t seed, std::size_t obd_cap) {
  switch (c) {
    case Criterion::OBA:
      return oba_importance(g, batches, rule);
    case Criterion::Taylor:
      return taylor_importance(g, batches);
    case Criterion::Weight:
      return weight_importance(g);
    case Criterion::OBD:
      return obd_importance(g, batches, obd_cap);
    case Criterion::Random:
      return random_importance(g, seed);
  }
  throw ConfigError("unknown criterion");
}

void save_importance(const ImportanceTable& t, const NetworkGraph& g, const std::filesystem::path& stem) {
  using nlohmann::json;
  json m;
  m["criterion"] = std::string(criterion_name(t.criterion));
  m["batches"] = t.batches;
  m["aggregated"] = t.aggregated;
  m["rule"] = t.rule;
  m["graph_hash"] = t.graph_hash;
  m["byte_order"] = "little";
  m["dtype"] = "float64";
  m["tensors"] = json::object();
  std::vector<double> blob;
  for (const auto& [suffix, params] : sections(t)) {
    for (std::size_t i : g.parameter_layers()) {
      auto put = [&](const std::string& id, const Tensor& v) {
        m["tensors"][id] = {{"shape", v.shape()}, {"offset", blob.size() * 8}};
        blob.insert(blob.end(), v.storage().begin(), v.storage().end());
      };
      put(g.node(i).id + ".weight" + suffix, (*params)[i].weight);
      if (g.node(i).has_bias()) put(g.node(i).id + ".bias" + suffix, (*params)[i].bias);
    }
  }
  std::filesystem::path bin = stem, man = stem;
  bin += ".bin";
  man += ".json";
  write_f64_blob(bin, blob);
  write_text(man, m.dump(2) + "\n");
}

ImportanceTable load_importance(const NetworkGraph& g, const std::filesystem::path& stem) {
  using nlohmann::json;
  std::filesystem::path bin = stem, man = stem;
  bin += ".bin";
  man += ".json";
  const json m = json::parse(read_text(man));
  if (m.at("graph_hash").get<std::string>() != g.structure_hash()) {
    throw DimensionError("importance table was computed for a different graph");
  }
  const std::vector<double> blob = read_f64_blob(bin);
  ImportanceTable t = blank(g, parse_criterion(m.at("criterion").get<std::string>()));
  t.batches = m.at("batches").get<std::size_t>();
  t.aggregated = m.at("aggregated").get<bool>();
  t.rule = m.at("rule").get<std::string>();
  const json& tensors = m.at("tensors");
  auto fetch = [&](const std::string& id, const Tensor& like) {
    const json& e = tensors.at(id);
    const std::size_t off = e.at("offset").get<std::size_t>() / 8;
    if (off + like.size() > blob.size()) throw DataError("importance tensor '" + id + "' out of range");
    return Tensor(like.shape(), std::vector<double>(blob.begin() + static_cast<std::ptrdiff_t>(off),
                                                    blob.begin() + static_cast<std::ptrdiff_t>(off + like.size())));
  };
  auto load = [&](ParamTensors& dst, const std::string& suffix) {
    dst = zeros_like_params(g);
    for (std::size_t i : g.parameter_layers()) {
      dst[i].weight = fetch(g.node(i).id + ".weight" + suffix, dst[i].weight);
      if (g.node(i).has_bias()) dst[i].bias = fetch(g.node(i).id + ".bias" + suffix, dst[i].bias);
    }
  };
  load(t.scores, "");
  const auto layers = g.parameter_layers();
  if (!layers.empty() && tensors.contains(g.node(layers[0]).id + ".weight.first_order")) {
    load(t.first_order, ".first_order");
    load(t.upper, ".upper");
    load(t.lower, ".lower");
    load(t.parallel, ".parallel");
  }
  return t;
}

}  // namespace oba
