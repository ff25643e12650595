#include "oba/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "oba/errors.hpp"
#include "oba/hash.hpp"
#include "oba/network_io.hpp"
#include "oba/spearman.hpp"
#include "oba/verify.hpp"

namespace oba {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void allow_keys(const json& obj, const std::set<std::string>& keys, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (!keys.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

double get_real(const json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
  return obj.at(key).get<double>();
}

std::size_t get_count(const json& obj, const char* key, std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string("'") + key + "' must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

bool get_bool(const json& obj, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_boolean()) throw ConfigError(std::string("'") + key + "' must be true or false");
  return obj.at(key).get<bool>();
}

std::string get_string(const json& obj, const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_string()) throw ConfigError(std::string("'") + key + "' must be a string");
  return obj.at(key).get<std::string>();
}

std::vector<std::size_t> get_counts(const json& obj, const char* key) {
  std::vector<std::size_t> out;
  if (!obj.at(key).is_array()) throw ConfigError(std::string("'") + key + "' must be an array");
  for (const json& v : obj.at(key)) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(std::string("'") + key + "' must hold nonnegative integers");
    }
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

TrainConfig parse_train(const json& j, std::uint64_t seed) {
  allow_keys(j, {"lr", "momentum", "weight_decay", "epochs", "batch_size", "lr_drop_epochs", "lr_drop_factor"},
             "training settings");
  TrainConfig t;
  t.lr = get_real(j, "lr", t.lr);
  t.momentum = get_real(j, "momentum", t.momentum);
  t.weight_decay = get_real(j, "weight_decay", t.weight_decay);
  t.epochs = get_count(j, "epochs", t.epochs);
  t.batch_size = get_count(j, "batch_size", t.batch_size);
  t.lr_drop_epochs = j.contains("lr_drop_epochs") ? get_counts(j, "lr_drop_epochs") : TrainConfig::default_drops(t.epochs);
  t.lr_drop_factor = get_real(j, "lr_drop_factor", t.lr_drop_factor);
  t.seed = seed;
  t.validate();
  return t;
}

DatasetSpec parse_dataset(const json& j, const fs::path& base) {
  allow_keys(j,
             {"kind", "samples", "classes", "features", "image_shape", "separation", "noise", "seed", "eval_samples",
              "images", "labels", "eval_images", "eval_labels"},
             "dataset");
  DatasetSpec d;
  d.kind = get_string(j, "kind", d.kind);
  d.eval_samples = get_count(j, "eval_samples", d.eval_samples);
  if (d.kind == "blobs") {
    d.blobs.samples = get_count(j, "samples", d.blobs.samples);
    d.blobs.classes = get_count(j, "classes", d.blobs.classes);
    d.blobs.features = get_count(j, "features", d.blobs.features);
    if (j.contains("image_shape")) d.blobs.image_shape = get_counts(j, "image_shape");
    d.blobs.separation = get_real(j, "separation", d.blobs.separation);
    d.blobs.noise = get_real(j, "noise", d.blobs.noise);
    d.blobs.seed = get_count(j, "seed", d.blobs.seed);
    if (d.blobs.classes < 2) throw ConfigError("blobs need at least two classes");
  } else if (d.kind == "spirals") {
    d.blobs.samples = get_count(j, "samples", d.blobs.samples);
    d.noise = get_real(j, "noise", d.noise);
    d.blobs.seed = get_count(j, "seed", d.blobs.seed);
  } else if (d.kind == "idx") {
    if (!j.contains("images") || !j.contains("labels")) throw ConfigError("idx dataset needs 'images' and 'labels'");
    d.images = resolve(base, get_string(j, "images", ""));
    d.labels = resolve(base, get_string(j, "labels", ""));
    if (j.contains("eval_images")) d.eval_images = resolve(base, get_string(j, "eval_images", ""));
    if (j.contains("eval_labels")) d.eval_labels = resolve(base, get_string(j, "eval_labels", ""));
    if (d.eval_images.empty() != d.eval_labels.empty()) {
      throw ConfigError("'eval_images' and 'eval_labels' go together");
    }
  } else {
    throw ConfigError("unknown dataset kind '" + d.kind + "'");
  }
  return d;
}

DeltaRule parse_rule(const std::string& name) {
  if (name == "param") return DeltaRule::param_itself();
  throw ConfigError("unknown delta rule '" + name + "' (only 'param' is configurable)");
}

template <typename T, typename F>
std::vector<T> parse_names(const json& j, const char* key, F parse) {
  std::vector<T> out;
  if (!j.at(key).is_array()) throw ConfigError(std::string("'") + key + "' must be an array");
  for (const json& v : j.at(key)) {
    if (!v.is_string()) throw ConfigError(std::string("'") + key + "' must hold names");
    out.push_back(parse(v.get<std::string>()));
  }
  return out;
}

struct Session {
  RunConfig cfg;
  std::string command;
  std::string config_text;
  std::ostream& out;
  std::vector<fs::path> written;

  fs::path path(const std::string& rel) const { return cfg.out / rel; }

  void emit(const std::string& rel, const std::string& text) {
    write_text(path(rel), text);
    written.push_back(rel);
  }

  void emit_dir(const std::string& rel) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path(rel)))
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), cfg.out));
    std::sort(files.begin(), files.end());
    written.insert(written.end(), files.begin(), files.end());
  }

  void emit_files(const std::vector<std::string>& rels) {
    for (const auto& r : rels) written.push_back(r);
  }

  void manifest() {
    json doc;
    doc["command"] = command;
    doc["seed"] = cfg.seed;
    doc["config_fnv1a64"] = hex64(fnv1a64(config_text));
    doc["artifacts"] = json::array();
    std::vector<fs::path> files = written;
    std::sort(files.begin(), files.end());
    files.erase(std::unique(files.begin(), files.end()), files.end());
    for (const auto& f : files) {
      const std::string bytes = read_text(cfg.out / f);
      doc["artifacts"].push_back({{"path", f.generic_string()}, {"bytes", bytes.size()}, {"fnv1a64", hex64(fnv1a64(bytes))}});
    }
    write_text(cfg.out / "manifest.json", doc.dump(2) + "\n");
  }
};

struct Model {
  NetworkGraph graph;
  std::optional<PruneMask> mask;
};

Model load_model(const RunConfig& cfg) {
  Model m;
  if (!cfg.model.empty()) {
    if (!fs::exists(cfg.model / "network.json")) {
      throw ConfigError("no network.json under model directory '" + cfg.model.string() + "'");
    }
    m.graph = load_network(cfg.model / "network.json", cfg.seed);
    if (fs::exists(cfg.model / "model.json")) m.mask = load_checkpoint(m.graph, cfg.model / "model");
    return m;
  }
  if (cfg.network.empty()) throw ConfigError("config needs 'network' or 'model'");
  if (!fs::exists(cfg.network)) throw ConfigError("network file '" + cfg.network.string() + "' not found");
  m.graph = load_network(cfg.network, cfg.seed);
  return m;
}

std::pair<Dataset, Dataset> require_data(const RunConfig& cfg, const std::string& cmd) {
  if (!cfg.has_dataset) throw ConfigError("'" + cmd + "' needs a 'dataset' section");
  return load_datasets(cfg.dataset, cfg.seed);
}

std::string history_csv(const TrainHistory& h) {
  std::string s = "epoch,lr,loss,accuracy\n";
  for (const auto& e : h.epochs) {
    s += std::to_string(e.epoch) + "," + format_real(e.lr) + "," + format_real(e.loss) + "," +
         format_real(e.accuracy) + "\n";
  }
  return s;
}

std::string metrics_csv(const NetworkGraph& g, const Dataset& train, const Dataset& eval) {
  const FlopCount fc = count_flops(g);
  std::string s = "split,accuracy,loss,flops,params\n";
  for (const auto& [name, ds] : {std::pair<const char*, const Dataset*>{"train", &train}, {"eval", &eval}}) {
    const EvalResult r = evaluate(g, *ds);
    s += std::string(name) + "," + format_real(r.accuracy) + "," + format_real(r.loss) + "," +
         std::to_string(fc.flops) + "," + std::to_string(fc.params) + "\n";
  }
  return s;
}

int cmd_train(Session& s) {
  auto [train, eval] = require_data(s.cfg, "train");
  Model m = load_model(s.cfg);
  const TrainHistory h = sgd_train(m.graph, train, s.cfg.train, m.mask ? &*m.mask : nullptr);
  save_model(m.graph, s.path("model"), m.mask ? &*m.mask : nullptr);
  s.emit_dir("model");
  s.emit("history.csv", history_csv(h));
  s.emit("metrics.csv", metrics_csv(m.graph, train, eval));
  s.out << "trained " << h.epochs.size() << " epochs" << (h.diverged ? " (diverged, last finite state kept)" : "")
        << "\n";
  return kExitOk;
}

int cmd_finetune(Session& s) {
  auto [train, eval] = require_data(s.cfg, "finetune");
  Model m = load_model(s.cfg);
  const TrainConfig& tc = s.cfg.finetune ? *s.cfg.finetune : s.cfg.train;
  const TrainHistory h = sgd_train(m.graph, train, tc, m.mask ? &*m.mask : nullptr);
  save_model(m.graph, s.path("model"), m.mask ? &*m.mask : nullptr);
  s.emit_dir("model");
  s.emit("history.csv", history_csv(h));
  s.emit("metrics.csv", metrics_csv(m.graph, train, eval));
  s.out << "fine-tuned " << h.epochs.size() << " epochs\n";
  return kExitOk;
}

int cmd_eval(Session& s) {
  auto [train, eval] = require_data(s.cfg, "eval");
  const Model m = load_model(s.cfg);
  const std::string csv = metrics_csv(m.graph, train, eval);
  s.emit("eval.csv", csv);
  s.out << csv;
  return kExitOk;
}

double param_sum(const ParamTensors& p, std::size_t i) {
  return sum(p[i].weight) + (p[i].bias.size() ? sum(p[i].bias) : 0.0);
}

int cmd_score(Session& s) {
  const Model m = load_model(s.cfg);
  const ScoringConfig& sc = s.cfg.scoring;
  std::vector<Batch> batches;
  if (sc.criterion != Criterion::Weight && sc.criterion != Criterion::Random) {
    auto [train, eval] = require_data(s.cfg, "score");
    batches = take_batches(train, sc.batch_size, sc.batches);
  }
  const ImportanceTable t = compute_importance(sc.criterion, m.graph, batches, sc.rule, sc.seed, sc.obd_cap);
  save_importance(t, m.graph, s.path("importance"));
  s.emit_files({"importance.json", "importance.bin"});

  std::string csv = "layer,entries,score_sum,first_order_sum,second_order_sum,upper_sum,lower_sum,parallel_sum\n";
  const ParamTensors second = t.has_components() ? t.second_order() : ParamTensors{};
  for (std::size_t i = 0; i < m.graph.size(); ++i) {
    const LayerNode& n = m.graph.node(i);
    if (!n.has_params()) continue;
    csv += n.id + "," + std::to_string(n.param_count()) + "," + format_real(param_sum(t.scores, i));
    if (t.has_components()) {
      for (const ParamTensors* p : {&t.first_order, &second, &t.upper, &t.lower, &t.parallel})
        csv += "," + format_real(param_sum(*p, i));
    } else {
      csv += ",,,,,";
    }
    csv += "\n";
  }
  s.emit("summary.csv", csv);
  s.out << "scored " << criterion_name(sc.criterion) << " over " << batches.size() << " batches\n";
  return kExitOk;
}

int cmd_prune(Session& s) {
  auto [train, eval] = require_data(s.cfg, "prune");
  const Model m = load_model(s.cfg);
  const RunConfig& c = s.cfg;
  if (c.mode == PruneMask::Mode::Structured) {
    if (m.mask) throw ConfigError("structured pruning of a masked model is not supported");
    PruneConfig pc;
    pc.scoring = c.scoring;
    pc.schedule = c.schedule;
    pc.target_flops = c.target_flops;
    pc.iterative = c.iterative;
    pc.finetune = c.finetune;
    const PruneResult r = prune_to_target(m.graph, train, eval, pc);
    save_model(r.graph, s.path("model"));
    s.emit_dir("model");
    std::string csv = "step,p,flops,params,accuracy\n";
    for (const auto& st : r.steps) {
      csv += std::to_string(st.step) + "," + format_real(st.p) + "," + std::to_string(st.flops) + "," +
             std::to_string(st.params) + "," + format_real(st.accuracy) + "\n";
    }
    s.emit("prune_report.csv", csv);
    s.out << "pruned to " << format_real(r.flops_fraction) << " of the original FLOPs in " << r.steps.size() - 1
          << " steps\n";
    return kExitOk;
  }
  if (c.sparsity_levels.empty()) throw ConfigError("unstructured pruning needs 'sparsity_levels'");
  MultistageConfig mc;
  mc.scoring = c.scoring;
  mc.levels = c.sparsity_levels;
  mc.finetune = c.finetune;
  const MultistageResult r = unstructured_multistage(m.graph, train, eval, mc);
  save_model(r.graph, s.path("model"), &r.mask);
  s.emit_dir("model");
  std::string csv = "level,sparsity,pruned,accuracy,loss,accuracy_ratio\n";
  for (const auto& st : r.stages) {
    const double ratio = r.baseline.accuracy > 0.0 ? st.accuracy / r.baseline.accuracy : 0.0;
    csv += format_real(st.level) + "," + format_real(st.sparsity) + "," + std::to_string(st.pruned) + "," +
           format_real(st.accuracy) + "," + format_real(st.loss) + "," + format_real(ratio) + "\n";
  }
  s.emit("stages.csv", csv);
  s.out << "pruned " << r.stages.size() << " stages, final sparsity " << format_real(r.mask.sparsity) << "\n";
  return kExitOk;
}

std::string opt_real(const std::optional<double>& v) { return v ? format_real(*v) : "undefined"; }

int cmd_spearman(Session& s) {
  auto [train, eval] = require_data(s.cfg, "spearman");
  const Model m = load_model(s.cfg);
  if (m.mask) throw ConfigError("spearman evaluation of a masked model is not supported");
  const ScoringConfig& sc = s.cfg.scoring;
  const std::size_t n_eval = std::min(s.cfg.spearman.eval_samples, eval.size());
  if (n_eval == 0) throw ConfigError("spearman needs a nonempty evaluation split");
  const Batch evb = whole(subset(eval, 0, n_eval));
  const std::vector<Batch> batches = take_batches(train, sc.batch_size, sc.batches);
  const auto groups = discover_groups(m.graph);
  const auto layers = prunable_layers(m.graph);

  std::string csv = "criterion,normalization,scope,rho\n";
  std::string neurons = "criterion,layer,neuron,score,ground_truth\n";
  for (Criterion c : s.cfg.spearman.criteria) {
    const ImportanceTable t = compute_importance(c, m.graph, batches, sc.rule, sc.seed, sc.obd_cap);
    const NeuronScores ns = gather_neuron_scores(m.graph, t, groups);
    bool rows_written = false;
    for (Normalization nm : s.cfg.spearman.normalizations) {
      const SpearmanResult r = spearman_eval(m.graph, evb, layers, ns, nm);
      for (SpearmanScope scope : {SpearmanScope::PerLayer, SpearmanScope::AllLayers}) {
        csv += std::string(criterion_name(c)) + "," + std::string(normalization_name(nm)) + "," +
               std::string(scope_name(scope)) + "," + opt_real(r.value(scope)) + "\n";
      }
      if (!rows_written) {
        for (const auto& row : r.rows) {
          neurons += std::string(criterion_name(c)) + "," + row.layer + "," + std::to_string(row.neuron) + "," +
                     format_real(row.score) + "," + format_real(row.ground_truth) + "\n";
        }
        rows_written = true;
      }
    }
  }
  // Ground truth ranked against itself.
  double sanity = 0.0;
  std::size_t defined = 0;
  for (std::size_t l : layers) {
    const auto gt = masking_ground_truth(m.graph, evb, l);
    if (const auto r = spearman(gt, gt)) {
      sanity += *r;
      ++defined;
    }
  }
  csv += "ground_truth,none,per_layer," + (defined ? format_real(sanity / static_cast<double>(defined)) : "undefined") +
         "\n";
  s.emit("spearman.csv", csv);
  s.emit("spearman_neurons.csv", neurons);
  s.out << csv;
  return kExitOk;
}

int cmd_verify(Session& s) {
  const VerifySpec& v = s.cfg.verify;
  std::vector<CheckResult> checks;
  OracleSuiteConfig oc;
  oc.graphs = v.graphs;
  oc.seed = s.cfg.seed;
  oc.cap = v.cap;
  if (v.fault_parallel_sign) oc.options.parallel_sign = -1.0;
  const VerifyTolerances tol;
  const OracleSuiteResult o = oracle_suite(oc, tol);
  std::string where;
  for (std::size_t k = 0; k < o.mismatches.size() && k < 8; ++k) {
    const auto& mm = o.mismatches[k];
    where += (k ? "; " : "") + std::string("graph ") + std::to_string(mm.graph) + " (" + mm.family + ") layer " +
             mm.layer + " " + mm.component;
  }
  checks.push_back({"oracle_second_order", o.max_error, tol.oracle, o.mismatches.empty(), where});
  for (auto& c : exactness_checks(s.cfg.seed, tol)) checks.push_back(c);
  auto add_directional = [&](const std::vector<DirectionalCheck>& ds, double limit) {
    for (const auto& d : ds) {
      checks.push_back({d.name, d.max_error, limit, d.checked > 0 && d.max_error <= limit,
                        std::to_string(d.checked) + " checked, " + std::to_string(d.skipped) + " skipped at kinks"});
    }
  };
  add_directional(layer_jvp_fd_checks(s.cfg.seed, v.fd_draws, tol), tol.jvp_fd);
  add_directional(graph_jvp_fd_checks(s.cfg.seed, v.random_graphs, tol), tol.jvp_fd);
  add_directional(adjoint_checks(s.cfg.seed, v.adjoint_draws, tol), tol.adjoint);

  bool ok = true;
  std::string csv = "check,value,tolerance,result,detail\n";
  for (const auto& c : checks) {
    ok = ok && c.pass;
    csv += c.name + "," + format_real(c.value) + "," + format_real(c.tolerance) + "," + (c.pass ? "PASS" : "FAIL") +
           ",\"" + c.detail + "\"\n";
    s.out << (c.pass ? "PASS " : "FAIL ") << c.name << " " << format_real(c.value) << " <= "
          << format_real(c.tolerance) << (c.detail.empty() ? "" : "  [" + c.detail + "]") << "\n";
  }
  s.emit("verify.csv", csv);
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

RunConfig parse_run_config(const std::string& text, const fs::path& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  allow_keys(j,
             {"network", "model", "dataset", "train", "finetune", "criterion", "normalization", "batches",
              "batch_size", "delta_rule", "obd_cap", "mode", "target_flops", "schedule", "iterative",
              "sparsity_levels", "spearman", "verify", "out", "seed"},
             "config");
  RunConfig c;
  c.seed = get_count(j, "seed", 0);
  if (j.contains("network")) c.network = resolve(base, get_string(j, "network", ""));
  if (j.contains("model")) c.model = resolve(base, get_string(j, "model", ""));
  if (j.contains("dataset")) {
    c.dataset = parse_dataset(j.at("dataset"), base);
    c.has_dataset = true;
  }
  c.train = parse_train(j.value("train", json::object()), c.seed);
  if (j.contains("finetune")) c.finetune = parse_train(j.at("finetune"), c.seed);

  c.scoring.criterion = parse_criterion(get_string(j, "criterion", "oba"));
  c.mode = parse_mode(get_string(j, "mode", "structured"));
  const std::string default_norm = c.mode == PruneMask::Mode::Structured ? "max" : "none";
  c.scoring.normalization = parse_normalization(get_string(j, "normalization", default_norm));
  c.scoring.batches = get_count(j, "batches", c.scoring.batches);
  c.scoring.batch_size = get_count(j, "batch_size", c.scoring.batch_size);
  c.scoring.rule = parse_rule(get_string(j, "delta_rule", "param"));
  c.scoring.obd_cap = get_count(j, "obd_cap", c.scoring.obd_cap);
  c.scoring.seed = c.seed;
  if (c.scoring.batches == 0 || c.scoring.batch_size == 0) throw ConfigError("'batches' and 'batch_size' must be >= 1");

  c.target_flops = get_real(j, "target_flops", c.target_flops);
  if (!(c.target_flops > 0.0 && c.target_flops < 1.0)) throw ConfigError("'target_flops' must lie in (0, 1)");
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    allow_keys(s, {"p0", "ratio", "max_steps"}, "schedule");
    c.schedule.p0 = get_real(s, "p0", c.schedule.p0);
    c.schedule.ratio = get_real(s, "ratio", c.schedule.ratio);
    c.schedule.max_steps = get_count(s, "max_steps", c.schedule.max_steps);
  }
  c.iterative = get_bool(j, "iterative", false);
  if (j.contains("sparsity_levels")) {
    if (!j.at("sparsity_levels").is_array()) throw ConfigError("'sparsity_levels' must be an array");
    for (const json& v : j.at("sparsity_levels")) {
      if (!v.is_number()) throw ConfigError("'sparsity_levels' must hold numbers");
      c.sparsity_levels.push_back(v.get<double>());
    }
    for (std::size_t i = 0; i < c.sparsity_levels.size(); ++i) {
      if (!(c.sparsity_levels[i] >= 0.0 && c.sparsity_levels[i] < 1.0)) {
        throw ConfigError("sparsity levels must lie in [0, 1)");
      }
      if (i > 0 && c.sparsity_levels[i] <= c.sparsity_levels[i - 1]) {
        throw ConfigError("sparsity levels must be ascending");
      }
    }
  }
  if (c.mode == PruneMask::Mode::Unstructured && c.iterative) {
    throw ConfigError("'iterative' applies to structured pruning only");
  }
  if (j.contains("spearman")) {
    const json& s = j.at("spearman");
    allow_keys(s, {"criteria", "normalizations", "eval_samples"}, "spearman");
    if (s.contains("criteria")) c.spearman.criteria = parse_names<Criterion>(s, "criteria", parse_criterion);
    if (s.contains("normalizations")) {
      c.spearman.normalizations = parse_names<Normalization>(s, "normalizations", parse_normalization);
    }
    c.spearman.eval_samples = get_count(s, "eval_samples", c.spearman.eval_samples);
  }
  if (j.contains("verify")) {
    const json& v = j.at("verify");
    allow_keys(v, {"graphs", "fd_draws", "adjoint_draws", "random_graphs", "cap", "fault"}, "verify");
    c.verify.graphs = get_count(v, "graphs", c.verify.graphs);
    c.verify.fd_draws = get_count(v, "fd_draws", c.verify.fd_draws);
    c.verify.adjoint_draws = get_count(v, "adjoint_draws", c.verify.adjoint_draws);
    c.verify.random_graphs = get_count(v, "random_graphs", c.verify.random_graphs);
    c.verify.cap = get_count(v, "cap", c.verify.cap);
    const std::string fault = get_string(v, "fault", "none");
    if (fault != "none" && fault != "parallel_sign") throw ConfigError("unknown fault '" + fault + "'");
    c.verify.fault_parallel_sign = fault == "parallel_sign";
  }
  if (j.contains("out")) c.out = resolve(base, get_string(j, "out", ""));
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file '" + path.string() + "' not found");
  return parse_run_config(read_text(path), path.parent_path());
}

std::pair<Dataset, Dataset> load_datasets(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.kind == "idx") {
    for (const fs::path& p : {spec.images, spec.labels})
      if (!fs::exists(p)) throw ConfigError("dataset file '" + p.string() + "' not found");
    Dataset train = load_idx(spec.images, spec.labels);
    if (spec.eval_images.empty()) return {train, train};
    return {std::move(train), load_idx(spec.eval_images, spec.eval_labels)};
  }
  if (spec.kind == "spirals") {
    const std::uint64_t s = spec.blobs.seed + seed;
    return {make_spirals(spec.blobs.samples, spec.noise, s), make_spirals(spec.eval_samples, spec.noise, s + 1)};
  }
  BlobsConfig b = spec.blobs;
  b.seed += seed;
  b.samples += spec.eval_samples;
  const Dataset all = make_blobs(b);
  return {subset(all, 0, spec.blobs.samples), subset(all, spec.blobs.samples, spec.eval_samples)};
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal Brain Apoptosis pruning toolkit", "oba"};
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<std::size_t> cap;
  app.add_option("command", command, "train | score | prune | finetune | eval | verify | spearman")
      ->required()
      ->check(CLI::IsMember({"train", "score", "prune", "finetune", "eval", "verify", "spearman"}));
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "override the output directory");
  app.add_option("--cap", cap, "parameter cap for the dense oracle");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (!fs::exists(config_path)) throw ConfigError("config file '" + config_path + "' not found");
    std::string text = read_text(config_path);
    RunConfig cfg = parse_run_config(text, fs::path(config_path).parent_path());
    if (seed) {
      cfg.seed = *seed;
      cfg.scoring.seed = *seed;
      cfg.train.seed = *seed;
      if (cfg.finetune) cfg.finetune->seed = *seed;
    }
    if (!out_dir.empty()) cfg.out = out_dir;
    if (cap) {
      cfg.verify.cap = *cap;
      cfg.scoring.obd_cap = *cap;
    }
    fs::create_directories(cfg.out);
    Session s{cfg, command, text + "\n" + (seed ? std::to_string(*seed) : "") + "\n" + (cap ? std::to_string(*cap) : ""),
              out, {}};
    int code = kExitOk;
    if (command == "train") code = cmd_train(s);
    if (command == "finetune") code = cmd_finetune(s);
    if (command == "eval") code = cmd_eval(s);
    if (command == "score") code = cmd_score(s);
    if (command == "prune") code = cmd_prune(s);
    if (command == "spearman") code = cmd_spearman(s);
    if (command == "verify") code = cmd_verify(s);
    s.manifest();
    return code;
  } catch (const CapExceeded& e) {
    err << "refused: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const GraphError& e) {
    err << "network error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace oba
