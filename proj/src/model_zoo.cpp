#include "oba/model_zoo.hpp"

#include <random>

#include <json.hpp>

#include "oba/errors.hpp"
#include "oba/network_io.hpp"

namespace oba {

using nlohmann::json;

namespace {

class Builder {
 public:
  explicit Builder(Shape input) { doc_["input_shape"] = input; }

  std::string add(const std::string& id, const std::string& kind, json attrs, std::vector<std::string> inputs) {
    doc_["nodes"].push_back({{"id", id}, {"kind", kind}, {"attrs", std::move(attrs)}});
    for (std::size_t s = 0; s < inputs.size(); ++s) doc_["edges"].push_back({inputs[s], id, s});
    return id;
  }

  std::string finish(const std::string& last, LossSink loss) {
    const char* kind = loss == LossSink::CrossEntropy ? "CrossEntropyLoss"
                       : loss == LossSink::Linear     ? "LinearLoss"
                                                      : "SquaredErrorLoss";
    add("loss", kind, json::object(), {last});
    doc_["loss"] = "loss";
    return doc_.dump(2) + "\n";
  }

 private:
  json doc_ = {{"nodes", json::array()}, {"edges", json::array()}};
};

json linear_attrs(std::size_t in, std::size_t out, bool bias) {
  return {{"in_features", in}, {"out_features", out}, {"bias", bias}};
}

}  // namespace

std::string mlp_json(const MlpSpec& spec) {
  Builder b({spec.inputs});
  std::string last = "input";
  std::size_t width = spec.inputs;
  for (std::size_t k = 0; k < spec.hidden.size(); ++k) {
    const std::string n = std::to_string(k + 1);
    last = b.add("fc" + n, "Linear", linear_attrs(width, spec.hidden[k], spec.bias), {last});
    if (spec.relu) last = b.add("relu" + n, "ReLU", json::object(), {last});
    width = spec.hidden[k];
  }
  last = b.add("fc" + std::to_string(spec.hidden.size() + 1), "Linear", linear_attrs(width, spec.outputs, spec.bias),
               {last});
  return b.finish(last, spec.loss);
}

std::string cnn_json(const CnnSpec& spec) {
  if (spec.input.size() != 3) throw GraphError("CNN input must be [C, H, W]");
  Builder b(spec.input);
  std::string last = "input";
  std::size_t ch = spec.input[0], h = spec.input[1], w = spec.input[2];
  for (std::size_t k = 0; k < spec.channels.size(); ++k) {
    const std::string n = std::to_string(k + 1);
    last = b.add("conv" + n, "Conv2d",
                 {{"in_channels", ch}, {"out_channels", spec.channels[k]}, {"kernel", spec.kernel}, {"pad", spec.pad}},
                 {last});
    h = h + 2 * spec.pad - spec.kernel + 1;
    w = w + 2 * spec.pad - spec.kernel + 1;
    last = b.add("relu" + n, "ReLU", json::object(), {last});
    if (spec.pool > 0) {
      last = b.add("pool" + n, spec.max_pool ? "MaxPool" : "AvgPool", {{"kernel", spec.pool}}, {last});
      h /= spec.pool;
      w /= spec.pool;
    }
    ch = spec.channels[k];
  }
  last = b.add("flatten", "Flatten", json::object(), {last});
  last = b.add("fc", "Linear", linear_attrs(ch * h * w, spec.outputs, true), {last});
  return b.finish(last, spec.loss);
}

std::string attention_json(const AttentionSpec& spec) {
  Builder b({spec.tokens, spec.model_dim});
  b.add("q", "Linear", linear_attrs(spec.model_dim, spec.key_dim, true), {"input"});
  b.add("k", "Linear", linear_attrs(spec.model_dim, spec.key_dim, spec.key_bias), {"input"});
  b.add("v", "Linear", linear_attrs(spec.model_dim, spec.value_dim, spec.value_bias), {"input"});
  b.add("scale", "Scale", {{"scale", 1.0 / std::sqrt(static_cast<double>(spec.key_dim))}}, {"q"});
  b.add("scores", "MatMul", {{"transpose_right", true}}, {"scale", "k"});
  b.add("softmax", "Softmax", json::object(), {"scores"});
  const std::string last = b.add("context", "MatMul", json::object(), {"softmax", "v"});
  return b.finish(last, spec.loss);
}

std::string deep_linear_json(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw GraphError("deep linear network needs at least two widths");
  Builder b({dims[0]});
  std::string last = "input";
  for (std::size_t k = 1; k < dims.size(); ++k)
    last = b.add("w" + std::to_string(k), "Linear", linear_attrs(dims[k - 1], dims[k], false), {last});
  return b.finish(last, LossSink::Linear);
}

std::string bilinear_json(std::size_t tokens, std::size_t in_dim, std::size_t key_dim) {
  Builder b({tokens, in_dim});
  b.add("q", "Linear", linear_attrs(in_dim, key_dim, false), {"input"});
  b.add("k", "Linear", linear_attrs(in_dim, key_dim, false), {"input"});
  const std::string last = b.add("qk", "MatMul", {{"transpose_right", true}}, {"q", "k"});
  return b.finish(last, LossSink::Linear);
}

std::string residual_cnn_json(std::size_t channels, std::size_t side, std::size_t outputs) {
  Builder b({1, side, side});
  json conv = {{"in_channels", 1}, {"out_channels", channels}, {"kernel", 3}, {"pad", 1}};
  b.add("conv1", "Conv2d", conv, {"input"});
  b.add("relu1", "ReLU", json::object(), {"conv1"});
  conv["in_channels"] = channels;
  b.add("conv2", "Conv2d", conv, {"relu1"});
  b.add("add", "Add", json::object(), {"conv2", "conv1"});
  b.add("conv3", "Conv2d", conv, {"add"});
  b.add("relu3", "ReLU", json::object(), {"conv3"});
  b.add("flatten", "Flatten", json::object(), {"relu3"});
  const std::string last =
      b.add("fc", "Linear", linear_attrs(channels * side * side, outputs, true), {"flatten"});
  return b.finish(last, LossSink::CrossEntropy);
}

NetworkGraph build(const std::string& json_text, std::uint64_t seed) { return parse_network(json_text, seed); }

NetworkGraph random_tiny_graph(std::uint64_t seed, int family) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
  };
  const LossSink losses[3] = {LossSink::CrossEntropy, LossSink::Linear, LossSink::Squared};
  switch (family) {
    case 0: {
      MlpSpec s;
      s.inputs = pick(2, 6);
      s.hidden.clear();
      const std::size_t layers = pick(1, 3);
      for (std::size_t k = 1; k < layers; ++k) s.hidden.push_back(pick(2, 16));
      s.outputs = pick(2, 4);
      s.loss = losses[rng() % 3];
      s.bias = rng() % 4 != 0;
      return build(mlp_json(s), seed);
    }
    case 1: {
      CnnSpec s;
      s.input = {pick(1, 2), pick(4, 6), pick(4, 6)};
      s.channels.clear();
      for (std::size_t k = 0, n = pick(1, 2); k < n; ++k) s.channels.push_back(pick(1, 3));
      s.kernel = pick(2, 3);
      s.pad = s.kernel == 3 ? pick(0, 1) : 0;
      s.pool = 0;
      s.outputs = pick(2, 3);
      s.loss = losses[rng() % 3];
      return build(cnn_json(s), seed);
    }
    case 2: {
      AttentionSpec s;
      s.tokens = pick(2, 3);
      s.model_dim = pick(2, 4);
      s.key_dim = pick(2, 4);
      s.value_dim = pick(2, 4);
      s.value_bias = false;
      s.loss = rng() % 2 ? LossSink::Linear : LossSink::Squared;
      return build(attention_json(s), seed);
    }
    default:
      throw GraphError("unknown tiny graph family");
  }
}

Batch random_batch(const NetworkGraph& g, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Shape shape{n};
  shape.insert(shape.end(), g.input_shape().begin(), g.input_shape().end());
  Batch b{Tensor(shape), Tensor(Shape{0})};
  for (double& v : b.inputs.storage()) v = normal(rng);
  const LayerNode& loss = g.node(g.loss_index());
  Shape ts{n};
  if (loss.kind == LayerKind::CrossEntropyLoss) {
    b.targets = Tensor(ts);
    for (double& v : b.targets.storage()) v = static_cast<double>(rng() % loss.in_shapes[0][0]);
  } else {
    ts.insert(ts.end(), loss.in_shapes[0].begin(), loss.in_shapes[0].end());
    b.targets = Tensor(ts);
    for (double& v : b.targets.storage()) v = normal(rng);
  }
  return b;
}

}  // namespace oba
