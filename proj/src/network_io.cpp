#include "oba/network_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "oba/errors.hpp"
#include "oba/hash.hpp"

namespace oba {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::size_t get_size(const json& attrs, const char* key, const std::string& id) {
  if (!attrs.contains(key)) throw GraphError("node '" + id + "' is missing attribute '" + key + "'");
  const json& v = attrs.at(key);
  if (!v.is_number_integer() || v.get<long long>() <= 0) {
    throw GraphError("attribute '" + std::string(key) + "' of node '" + id + "' must be a positive integer");
  }
  return v.get<std::size_t>();
}

std::size_t get_size_or(const json& attrs, const char* key, std::size_t fallback, const std::string& id) {
  if (!attrs.contains(key)) return fallback;
  const json& v = attrs.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw GraphError("attribute '" + std::string(key) + "' of node '" + id + "' must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

void check_keys(const json& attrs, std::initializer_list<const char*> allowed, const std::string& id) {
  for (auto it = attrs.begin(); it != attrs.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw GraphError("node '" + id + "' has unknown attribute '" + it.key() + "'");
  }
}

std::uint64_t node_seed(std::uint64_t seed, const std::string& id) {
  return fnv1a64(id, 0xcbf29ce484222325ULL ^ (seed * 0x9E3779B97F4A7C15ULL));
}

void fill_values(Tensor& t, const json& src, const std::string& id, const char* what) {
  if (!src.is_array() || src.size() != t.size()) {
    throw GraphError("init " + std::string(what) + " of node '" + id + "' needs " + std::to_string(t.size()) +
                     " values");
  }
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = src[i].get<double>();
}

void initialize(LayerNode& n, const json& init, std::uint64_t seed) {
  const std::string scheme = init.value("scheme", std::string("he_uniform"));
  if (scheme == "zeros") return;
  if (scheme == "constant") {
    const double v = init.value("value", 0.0);
    n.weight = Tensor(n.weight.shape(), v);
    n.bias = Tensor(n.bias.shape(), v);
    return;
  }
  if (scheme == "values") {
    fill_values(n.weight, init.at("weight"), n.id, "weight");
    if (n.has_bias()) fill_values(n.bias, init.value("bias", json::array()), n.id, "bias");
    return;
  }
  if (scheme != "he_uniform") throw GraphError("unknown init scheme '" + scheme + "' on node '" + n.id + "'");
  if (n.kind == LayerKind::LayerNorm) {
    n.weight = Tensor(n.weight.shape(), 1.0);
    return;
  }
  const std::size_t fan_in = n.weight.size() / n.weight.dim(0);
  std::mt19937_64 rng(node_seed(seed, n.id));
  const double wb = std::sqrt(6.0 / static_cast<double>(fan_in));
  const double bb = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> wd(-wb, wb), bd(-bb, bb);
  for (std::size_t i = 0; i < n.weight.size(); ++i) n.weight[i] = wd(rng);
  for (std::size_t i = 0; i < n.bias.size(); ++i) n.bias[i] = bd(rng);
}

LayerNode parse_node(const json& jn, std::uint64_t seed) {
  LayerNode n;
  n.id = jn.at("id").get<std::string>();
  try {
    n.kind = parse_kind(jn.at("kind").get<std::string>());
  } catch (const std::exception& e) {
    throw GraphError("node '" + n.id + "': " + e.what());
  }
  const json attrs = jn.value("attrs", json::object());
  switch (n.kind) {
    case LayerKind::Linear: {
      check_keys(attrs, {"in_features", "out_features", "bias"}, n.id);
      const std::size_t in = get_size(attrs, "in_features", n.id), out = get_size(attrs, "out_features", n.id);
      n.weight = Tensor({out, in});
      if (attrs.value("bias", true)) n.bias = Tensor({out});
      break;
    }
    case LayerKind::Conv2d: {
      check_keys(attrs, {"in_channels", "out_channels", "kernel", "stride", "pad", "bias"}, n.id);
      const std::size_t k = get_size(attrs, "kernel", n.id);
      const std::size_t out = get_size(attrs, "out_channels", n.id);
      n.weight = Tensor({out, get_size(attrs, "in_channels", n.id), k, k});
      if (attrs.value("bias", true)) n.bias = Tensor({out});
      n.attrs.stride = get_size_or(attrs, "stride", 1, n.id);
      n.attrs.pad = get_size_or(attrs, "pad", 0, n.id);
      break;
    }
    case LayerKind::LayerNorm: {
      check_keys(attrs, {"dim", "eps"}, n.id);
      const std::size_t d = get_size(attrs, "dim", n.id);
      n.weight = Tensor({d});
      n.bias = Tensor({d});
      n.attrs.eps = attrs.value("eps", 1e-5);
      break;
    }
    case LayerKind::AvgPool:
    case LayerKind::MaxPool:
      check_keys(attrs, {"kernel", "stride"}, n.id);
      n.attrs.kernel = get_size(attrs, "kernel", n.id);
      n.attrs.stride = get_size_or(attrs, "stride", n.attrs.kernel, n.id);
      break;
    case LayerKind::Scale:
      check_keys(attrs, {"scale"}, n.id);
      n.attrs.scale = attrs.value("scale", 1.0);
      break;
    case LayerKind::MatMul:
      check_keys(attrs, {"transpose_right"}, n.id);
      n.attrs.transpose_right = attrs.value("transpose_right", false);
      break;
    default:
      check_keys(attrs, {}, n.id);
  }
  if (n.attrs.stride == 0) throw GraphError("node '" + n.id + "' has stride 0");
  if (n.has_params()) initialize(n, jn.value("init", json::object()), seed);
  return n;
}

json attrs_of(const LayerNode& n) {
  json a = json::object();
  switch (n.kind) {
    case LayerKind::Linear:
      a["in_features"] = n.weight.dim(1);
      a["out_features"] = n.weight.dim(0);
      a["bias"] = n.has_bias();
      break;
    case LayerKind::Conv2d:
      a["in_channels"] = n.weight.dim(1);
      a["out_channels"] = n.weight.dim(0);
      a["kernel"] = n.weight.dim(2);
      a["stride"] = n.attrs.stride;
      a["pad"] = n.attrs.pad;
      a["bias"] = n.has_bias();
      break;
    case LayerKind::LayerNorm:
      a["dim"] = n.weight.dim(0);
      a["eps"] = n.attrs.eps;
      break;
    case LayerKind::AvgPool:
    case LayerKind::MaxPool:
      a["kernel"] = n.attrs.kernel;
      a["stride"] = n.attrs.stride;
      break;
    case LayerKind::Scale:
      a["scale"] = n.attrs.scale;
      break;
    case LayerKind::MatMul:
      a["transpose_right"] = n.attrs.transpose_right;
      break;
    default:
      break;
  }
  return a;
}

void put_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 7; b >= 0; --b) bits = (bits << 8) | p[b];
  return std::bit_cast<double>(bits);
}

json shape_json(const Shape& s) {
  json a = json::array();
  for (std::size_t d : s) a.push_back(d);
  return a;
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

void write_f64_blob(const fs::path& path, const std::vector<double>& values) {
  std::string bytes;
  bytes.reserve(values.size() * 8);
  for (double v : values) put_le(bytes, v);
  write_text(path, bytes);
}

std::vector<double> read_f64_blob(const fs::path& path) {
  const std::string bytes = read_text(path);
  if (bytes.size() % 8 != 0) throw DataError("blob '" + path.string() + "' is truncated");
  std::vector<double> out(bytes.size() / 8);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_le(p + 8 * i);
  return out;
}

NetworkGraph parse_network(const std::string& text, std::uint64_t seed, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw GraphError(std::string("network description is not valid JSON: ") + e.what());
  }
  try {
    Shape input_shape = doc.at("input_shape").get<Shape>();
    std::vector<LayerNode> nodes;
    std::map<std::string, std::size_t> by_id;
    for (const auto& jn : doc.at("nodes")) {
      nodes.push_back(parse_node(jn, seed));
      if (!by_id.emplace(nodes.back().id, nodes.size() - 1).second) {
        throw GraphError("duplicate node id '" + nodes.back().id + "'");
      }
    }
    std::vector<std::map<std::size_t, std::string>> slots(nodes.size());
    for (const auto& e : doc.value("edges", json::array())) {
      if (!e.is_array() || e.size() != 3) throw GraphError("edges must be [src, dst, slot] triples");
      const auto src = e[0].get<std::string>(), dst = e[1].get<std::string>();
      const auto slot = e[2].get<std::size_t>();
      auto it = by_id.find(dst);
      if (it == by_id.end()) throw GraphError("edge targets unknown node '" + dst + "'");
      if (!slots[it->second].emplace(slot, src).second) {
        throw GraphError("node '" + dst + "' has two edges into slot " + std::to_string(slot));
      }
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      std::size_t expect = 0;
      for (const auto& [slot, src] : slots[i]) {
        if (slot != expect++) throw GraphError("node '" + nodes[i].id + "' has a gap in its input slots");
        nodes[i].inputs.push_back(src);
      }
    }
    NetworkGraph g(std::move(input_shape), std::move(nodes), doc.at("loss").get<std::string>());
    require_supported(g);
    if (doc.contains("checkpoint") && !doc["checkpoint"].is_null()) {
      load_checkpoint(g, base_dir / doc["checkpoint"].get<std::string>());
    }
    return g;
  } catch (const json::exception& e) {
    throw GraphError(std::string("malformed network description: ") + e.what());
  }
}

NetworkGraph load_network(const fs::path& path, std::uint64_t seed) {
  return parse_network(read_text(path), seed, path.parent_path());
}

std::string network_to_json(const NetworkGraph& g, const std::string& checkpoint_stem) {
  json doc;
  doc["input_shape"] = shape_json(g.input_shape());
  doc["loss"] = g.node(g.loss_index()).id;
  doc["nodes"] = json::array();
  doc["edges"] = json::array();
  for (const auto& n : g.nodes()) {
    json jn;
    jn["id"] = n.id;
    jn["kind"] = std::string(kind_name(n.kind));
    jn["attrs"] = attrs_of(n);
    if (n.has_params() && checkpoint_stem.empty()) {
      jn["init"] = {{"scheme", "values"}, {"weight", n.weight.storage()}, {"bias", n.bias.storage()}};
    }
    doc["nodes"].push_back(jn);
    for (std::size_t s = 0; s < n.inputs.size(); ++s) doc["edges"].push_back({n.inputs[s], n.id, s});
  }
  if (!checkpoint_stem.empty()) doc["checkpoint"] = checkpoint_stem;
  return doc.dump(2) + "\n";
}

void save_checkpoint(const NetworkGraph& g, const fs::path& stem, const PruneMask* mask) {
  json manifest;
  manifest["byte_order"] = "little";
  manifest["dtype"] = "float64";
  manifest["graph_hash"] = g.structure_hash();
  manifest["tensors"] = json::object();
  std::vector<double> blob;
  auto put = [&](const std::string& id, const Tensor& t) {
    manifest["tensors"][id] = {{"shape", shape_json(t.shape())}, {"offset", blob.size() * 8}};
    blob.insert(blob.end(), t.storage().begin(), t.storage().end());
  };
  for (const auto& n : g.nodes()) {
    if (!n.has_params()) continue;
    put(n.id + ".weight", n.weight);
    if (n.has_bias()) put(n.id + ".bias", n.bias);
  }
  if (mask) {
    check_mask(g, *mask);
    json jm;
    jm["mode"] = std::string(mode_name(mask->mode));
    jm["graph_hash"] = mask->graph_hash;
    jm["sparsity"] = mask->sparsity;
    jm["pruned"] = mask->pruned;
    if (mask->mode == PruneMask::Mode::Structured) {
      jm["keep"] = mask->keep;
      jm["group_sizes"] = mask->group_sizes;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (mask->weight_masks[i].size() != 0) put(g.node(i).id + ".weight.mask", mask->weight_masks[i]);
    }
    manifest["mask"] = jm;
  }
  fs::path bin = stem;
  bin += ".bin";
  fs::path man = stem;
  man += ".json";
  write_f64_blob(bin, blob);
  write_text(man, manifest.dump(2) + "\n");
}

std::optional<PruneMask> load_checkpoint(NetworkGraph& g, const fs::path& stem) {
  fs::path bin = stem;
  bin += ".bin";
  fs::path man = stem;
  man += ".json";
  json manifest;
  try {
    manifest = json::parse(read_text(man));
  } catch (const json::exception& e) {
    throw DataError("checkpoint manifest '" + man.string() + "' is not valid JSON: " + e.what());
  }
  if (manifest.value("byte_order", "") != "little" || manifest.value("dtype", "") != "float64") {
    throw DataError("checkpoint '" + man.string() + "' is not little-endian float64");
  }
  const std::vector<double> blob = read_f64_blob(bin);
  const json& tensors = manifest.at("tensors");
  auto fetch = [&](const std::string& id, const Shape& shape) {
    if (!tensors.contains(id)) throw DataError("checkpoint has no tensor '" + id + "'");
    const json& e = tensors.at(id);
    if (e.at("shape").get<Shape>() != shape) {
      throw DataError("checkpoint tensor '" + id + "' has shape " + shape_to_string(e.at("shape").get<Shape>()) +
                      ", graph expects " + shape_to_string(shape));
    }
    const std::size_t off = e.at("offset").get<std::size_t>();
    const std::size_t n = shape_numel(shape);
    if (off % 8 != 0 || off / 8 + n > blob.size()) throw DataError("checkpoint tensor '" + id + "' out of range");
    return Tensor(shape, std::vector<double>(blob.begin() + static_cast<std::ptrdiff_t>(off / 8),
                                             blob.begin() + static_cast<std::ptrdiff_t>(off / 8 + n)));
  };
  for (std::size_t i = 0; i < g.size(); ++i) {
    const LayerNode& n = g.node(i);
    if (!n.has_params()) continue;
    g.weight(i) = fetch(n.id + ".weight", n.weight.shape());
    if (n.has_bias()) g.bias(i) = fetch(n.id + ".bias", n.bias.shape());
  }
  if (!manifest.contains("mask")) return std::nullopt;
  const json& jm = manifest["mask"];
  PruneMask m;
  m.mode = parse_mode(jm.at("mode").get<std::string>());
  m.graph_hash = jm.at("graph_hash").get<std::string>();
  m.sparsity = jm.value("sparsity", 0.0);
  m.pruned = jm.value("pruned", std::size_t{0});
  if (m.mode == PruneMask::Mode::Structured) {
    m.keep = jm.at("keep").get<std::vector<std::vector<std::size_t>>>();
    m.group_sizes = jm.at("group_sizes").get<std::vector<std::size_t>>();
  } else {
    for (const auto& n : g.nodes()) {
      const std::string id = n.id + ".weight.mask";
      m.weight_masks.push_back(tensors.contains(id) ? fetch(id, n.weight.shape()) : Tensor(Shape{0}));
    }
  }
  check_mask(g, m);
  return m;
}

void save_model(const NetworkGraph& g, const fs::path& dir, const PruneMask* mask) {
  fs::create_directories(dir);
  save_checkpoint(g, dir / "model", mask);
  write_text(dir / "network.json", network_to_json(g, "model"));
}

}  // namespace oba
