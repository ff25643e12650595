#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oba/autodiff.hpp"
#include "oba/cli.hpp"
#include "oba/connectivity.hpp"
#include "oba/mask.hpp"
#include "oba/model_zoo.hpp"
#include "oba/network_io.hpp"
#include "oba/pruning.hpp"
#include "oba/spearman.hpp"
#include "oba/verify.hpp"
#include "oba/workflows.hpp"

using namespace oba;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Pinned tolerances and thresholds.
constexpr std::size_t kOracleGraphs = 24;
constexpr double kOracleTol = 1e-8;
constexpr double kOracleSeconds = 60.0;
constexpr double kExactTol = 1e-4;
constexpr double kJvpFdTol = 1e-5;
constexpr std::size_t kFdDraws = 20;
constexpr std::size_t kFdGraphs = 5;
constexpr double kAdjointTol = 1e-10;
constexpr std::size_t kAdjointDraws = 100;
constexpr double kTrainAccuracy = 0.95;
constexpr double kSpearmanMin = 0.3;
constexpr double kRandomControlMax = 0.2;
constexpr std::size_t kRandomSeeds = 10;
constexpr double kRecoveryPoints = 0.02;
constexpr double kRandomMargin = 0.01;
constexpr double kKeepRatioAtLow = 0.99;
constexpr double kMaskTol = 1e-12;
constexpr std::size_t kRankVectors = 1000;

struct Outcome {
  bool pass = false;
  std::string summary;
  std::vector<std::string> notes;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string sci(double v) { return fmt("%.2e", v); }
std::string fix(double v) { return fmt("%.4f", v); }

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Outcome oracle_equivalence() {
  OracleSuiteConfig cfg;
  cfg.graphs = kOracleGraphs;
  VerifyTolerances tol;
  tol.oracle = kOracleTol;
  const OracleSuiteResult r = oracle_suite(cfg, tol);
  Outcome o;
  o.pass = r.mismatches.empty() && r.max_error <= kOracleTol && r.seconds < kOracleSeconds;
  o.summary = "OBA second-order parts vs dense oracle on " + std::to_string(r.graphs) +
              " random tiny graphs: max rel err " + sci(r.max_error) + " (tol " + sci(kOracleTol) + "), " +
              fmt("%.1f", r.seconds) + " s (limit " + fmt("%.0f", kOracleSeconds) + " s)";
  for (const auto& m : r.mismatches)
    o.notes.push_back("graph " + std::to_string(m.graph) + " (" + m.family + ") layer " + m.layer + " " +
                      m.component + ": " + sci(m.error));
  return o;
}

Outcome exactness() {
  VerifyTolerances tol;
  tol.exactness = kExactTol;
  Outcome o;
  o.pass = true;
  double worst = 0.0;
  for (const CheckResult& c : exactness_checks(0, tol)) {
    o.pass = o.pass && c.pass;
    worst = std::max(worst, c.value);
    o.notes.push_back(c.name + ": " + sci(c.value));
  }
  o.summary = "deep linear and bilinear constructions vs finite-difference HVP: max rel err " + sci(worst) +
              " (tol " + sci(kExactTol) + ")";
  return o;
}

Outcome jvp_finite_differences() {
  VerifyTolerances tol;
  tol.jvp_fd = kJvpFdTol;
  Outcome o;
  o.pass = true;
  double worst = 0.0;
  std::size_t kinds = 0, skipped = 0;
  auto take = [&](const DirectionalCheck& c) {
    const bool ok = c.checked > 0 && c.max_error <= kJvpFdTol;
    o.pass = o.pass && ok;
    worst = std::max(worst, c.max_error);
    skipped += c.skipped;
    if (!ok) o.notes.push_back(c.name + ": " + sci(c.max_error) + " over " + std::to_string(c.checked) + " draws");
  };
  for (const auto& c : layer_jvp_fd_checks(0, kFdDraws, tol)) {
    take(c);
    ++kinds;
  }
  for (const auto& c : graph_jvp_fd_checks(0, kFdGraphs, tol)) take(c);
  o.summary = std::to_string(kinds) + " layer kinds and " + std::to_string(kFdGraphs) +
              " random graphs vs central differences: max rel err " + sci(worst) + " (tol " + sci(kJvpFdTol) +
              "), " + std::to_string(skipped) + " kink draws excluded";
  return o;
}

Outcome adjoint() {
  VerifyTolerances tol;
  tol.adjoint = kAdjointTol;
  Outcome o;
  o.pass = true;
  double worst = 0.0;
  std::size_t kinds = 0;
  for (const auto& c : adjoint_checks(0, kAdjointDraws, tol)) {
    o.pass = o.pass && c.max_error <= kAdjointTol;
    worst = std::max(worst, c.max_error);
    ++kinds;
  }
  o.summary = "<u, JVP v> vs <VJP u, v> over " + std::to_string(kAdjointDraws) + " draws for " +
              std::to_string(kinds) + " kinds: max rel err " + sci(worst) + " (tol " + sci(kAdjointTol) + ")";
  return o;
}

std::optional<double> layer_rho(const NetworkGraph& g, const Batch& eval, const NeuronScores& s) {
  return spearman_eval(g, eval, prunable_layers(g), s, Normalization::Max).per_layer_mean;
}

Outcome spearman_property() {
  constexpr std::uint64_t seed = 1;
  BlobsConfig bc;
  bc.samples = 1024;
  bc.classes = 4;
  bc.features = 8;
  bc.noise = 1.0;
  bc.seed = seed;
  const Dataset ds = make_blobs(bc);
  MlpSpec spec;
  spec.inputs = 8;
  spec.hidden = {32, 32};
  spec.outputs = 4;
  NetworkGraph g = build(mlp_json(spec), seed);
  TrainConfig tc;
  tc.lr = 0.05;
  tc.epochs = 20;
  tc.lr_drop_epochs = TrainConfig::default_drops(20);
  tc.seed = seed;
  sgd_train(g, ds, tc);
  const double train_acc = evaluate(g, ds).accuracy;

  const auto batches = take_batches(ds, 64, 4);
  const Batch eval = whole(subset(ds, 0, 512));
  const auto groups = discover_groups(g);
  auto rho = [&](Criterion c, std::uint64_t s) {
    const ImportanceTable t = compute_importance(c, g, batches, DeltaRule::param_itself(), s);
    return layer_rho(g, eval, gather_neuron_scores(g, t, groups));
  };
  const auto oba = rho(Criterion::OBA, seed);
  std::vector<double> random;
  for (std::uint64_t s = 0; s < kRandomSeeds; ++s) random.push_back(rho(Criterion::Random, 1000 + s).value_or(0.0));
  const double random_mean = mean(random);

  NeuronScores magnitude =
      gather_neuron_scores(g, compute_importance(Criterion::OBA, g, batches, DeltaRule::param_itself(), seed), groups);
  for (auto& grp : magnitude.groups)
    for (double& v : grp) v = std::abs(v);

  Outcome o;
  const double oba_rho = oba.value_or(-2.0);
  o.pass = train_acc >= kTrainAccuracy && oba_rho >= kSpearmanMin && std::abs(random_mean) <= kRandomControlMax;
  o.summary = "MLP 8-32-32-4 on blobs, train acc " + fix(train_acc) + " (min " + fix(kTrainAccuracy) +
              "); OBA per-layer rho " + fix(oba_rho) + " (min " + fix(kSpearmanMin) + "); random control mean rho " +
              fix(random_mean) + " over " + std::to_string(kRandomSeeds) + " seeds (|rho| max " +
              fix(kRandomControlMax) + ")";
  o.notes.push_back("taylor per-layer rho " + fix(rho(Criterion::Taylor, seed).value_or(NAN)));
  o.notes.push_back("weight per-layer rho " + fix(rho(Criterion::Weight, seed).value_or(NAN)));
  o.notes.push_back("|OBA| per-layer rho " + fix(layer_rho(g, eval, magnitude).value_or(NAN)));
  return o;
}

Outcome structured_pipeline() {
  std::vector<double> base, oba, random, fractions;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    BlobsConfig bc;
    bc.samples = 1024;
    bc.classes = 4;
    bc.image_shape = {1, 8, 8};
    bc.noise = 1.5;
    bc.seed = seed;
    const Dataset all = make_blobs(bc);
    const Dataset train = subset(all, 0, 768), test = subset(all, 768, 256);
    CnnSpec spec;
    spec.channels = {8, 16};
    spec.outputs = 4;
    NetworkGraph g = build(cnn_json(spec), seed);
    TrainConfig tc;
    tc.lr = 0.02;
    tc.epochs = 15;
    tc.lr_drop_epochs = TrainConfig::default_drops(15);
    tc.seed = seed;
    sgd_train(g, train, tc);
    base.push_back(evaluate(g, test).accuracy);
    TrainConfig ft = tc;
    ft.lr = 0.01;
    ft.epochs = 5;
    ft.lr_drop_epochs = TrainConfig::default_drops(5);
    for (Criterion c : {Criterion::OBA, Criterion::Random}) {
      PruneConfig pc;
      pc.scoring.criterion = c;
      pc.scoring.seed = seed;
      pc.target_flops = 0.5;
      pc.finetune = ft;
      const PruneResult r = prune_to_target(g, train, test, pc);
      (c == Criterion::OBA ? oba : random).push_back(r.steps.back().accuracy);
      fractions.push_back(r.flops_fraction);
    }
  }
  const double b = mean(base), a = mean(oba), r = mean(random);
  Outcome o;
  o.pass = a >= b - kRecoveryPoints && a - r >= kRandomMargin;
  o.summary = "CNN 8/16 channels on 8x8 blobs pruned to 50% FLOPs + fine-tune, 3 seeds: baseline " + fix(b) +
              ", OBA " + fix(a) + " (max drop " + fix(kRecoveryPoints) + "), random " + fix(r) +
              " (required margin " + fix(kRandomMargin) + ")";
  std::string per_seed = "per seed OBA/random:";
  for (std::size_t i = 0; i < oba.size(); ++i) per_seed += " " + fix(oba[i]) + "/" + fix(random[i]);
  o.notes.push_back(per_seed);
  o.notes.push_back("FLOPs fraction reached between " + fix(*std::min_element(fractions.begin(), fractions.end())) +
                    " and " + fix(*std::max_element(fractions.begin(), fractions.end())));
  return o;
}

Outcome unstructured_multistage_check() {
  const std::vector<double> levels{0.1, 0.3, 0.5, 0.7, 0.8, 0.9};
  std::vector<double> oba_hi, weight_hi, taylor_hi;
  double low_min = 1.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    BlobsConfig bc;
    bc.samples = 1280;
    bc.classes = 4;
    bc.features = 8;
    bc.noise = 2.5;
    bc.seed = seed;
    const Dataset all = make_blobs(bc);
    const Dataset train = subset(all, 0, 1024), test = subset(all, 1024, 256);
    MlpSpec spec;
    spec.inputs = 8;
    spec.hidden = {16, 16};
    spec.outputs = 4;
    NetworkGraph g = build(mlp_json(spec), seed);
    TrainConfig tc;
    tc.lr = 0.05;
    tc.epochs = 20;
    tc.lr_drop_epochs = TrainConfig::default_drops(20);
    tc.seed = seed;
    sgd_train(g, train, tc);
    TrainConfig ft = tc;
    ft.lr = 0.01;
    ft.epochs = 2;
    ft.lr_drop_epochs = {};
    for (Criterion c : {Criterion::OBA, Criterion::Weight, Criterion::Taylor}) {
      MultistageConfig mc;
      mc.scoring.criterion = c;
      mc.scoring.seed = seed;
      mc.levels = levels;
      mc.finetune = ft;
      const MultistageResult r = unstructured_multistage(g, train, test, mc);
      const double ratio_low = r.stages.front().accuracy / r.baseline.accuracy;
      const double ratio_high = r.stages.back().accuracy / r.baseline.accuracy;
      if (c != Criterion::Taylor) low_min = std::min(low_min, ratio_low);
      (c == Criterion::OBA ? oba_hi : c == Criterion::Weight ? weight_hi : taylor_hi).push_back(ratio_high);
    }
  }
  const double a = mean(oba_hi), w = mean(weight_hi);
  Outcome o;
  o.pass = a >= w && low_min >= kKeepRatioAtLow;
  o.summary = "MLP 8-16-16-4 unstructured multistage, 3 seeds: accuracy ratio at 0.9 OBA " + fix(a) + " vs weight " +
              fix(w) + " (OBA must not be lower); lowest ratio at 0.1 " + fix(low_min) + " (min " +
              fix(kKeepRatioAtLow) + ")";
  o.notes.push_back("taylor accuracy ratio at 0.9 " + fix(mean(taylor_hi)));
  return o;
}

NetworkGraph mlp_with_groups(const std::vector<std::size_t>& sizes) {
  MlpSpec s;
  s.inputs = 3;
  s.hidden = sizes;
  s.outputs = 2;
  return build(mlp_json(s), 0);
}

/// Repeatedly removes the smallest (score, group, neuron) that is not its
/// group's protected maximum (last index among equal maxima).
std::vector<std::vector<std::size_t>> selection_oracle(const std::vector<std::vector<double>>& groups,
                                                       std::size_t count) {
  std::vector<std::vector<bool>> gone(groups.size());
  std::vector<std::size_t> top(groups.size(), 0);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    gone[k].assign(groups[k].size(), false);
    for (std::size_t j = 0; j < groups[k].size(); ++j)
      if (groups[k][j] >= groups[k][top[k]]) top[k] = j;
  }
  for (std::size_t step = 0; step < count; ++step) {
    std::size_t bk = groups.size(), bj = 0;
    for (std::size_t k = 0; k < groups.size(); ++k)
      for (std::size_t j = 0; j < groups[k].size(); ++j) {
        if (gone[k][j] || j == top[k]) continue;
        if (bk == groups.size() || groups[k][j] < groups[bk][bj]) {
          bk = k;
          bj = j;
        }
      }
    if (bk == groups.size()) break;
    gone[bk][bj] = true;
  }
  std::vector<std::vector<std::size_t>> keep(groups.size());
  for (std::size_t k = 0; k < groups.size(); ++k)
    for (std::size_t j = 0; j < groups[k].size(); ++j)
      if (!gone[k][j]) keep[k].push_back(j);
  return keep;
}

double logit_gap(const NetworkGraph& g, std::uint64_t seed) {
  const auto groups = discover_groups(g);
  const NeuronScores s = gather_neuron_scores(g, random_importance(g, seed), groups);
  const PruneMask m = rank_and_select(g, s, 0.4);
  const NetworkGraph small = apply_mask(g, m);
  const Batch b = random_batch(g, 8, seed + 1);
  const OutputGates gates = structured_gates(g, m);
  const ForwardCache full = forward(g, b.inputs, b.targets, &gates);
  const ForwardCache cut = forward(small, b.inputs, b.targets);
  const Tensor& x = full.nodes[g.producers(g.loss_index())[0]].output;
  const Tensor& y = cut.nodes[small.producers(small.loss_index())[0]].output;
  if (!x.same_shape(y)) return INFINITY;
  return max_abs(sub(x, y)) / std::max(max_abs(x), 1e-12);
}

Outcome pruning_mechanics() {
  Outcome o;
  double gap = 0.0;
  std::uint64_t seed = 0;
  std::vector<NetworkGraph> graphs;
  MlpSpec ms;
  ms.inputs = 6;
  ms.hidden = {12, 9};
  ms.outputs = 4;
  graphs.push_back(build(mlp_json(ms), 1));
  CnnSpec cs;
  cs.channels = {8, 16};
  graphs.push_back(build(cnn_json(cs), 2));
  graphs.push_back(build(residual_cnn_json(3, 4, 3), 3));
  graphs.push_back(build(attention_json(AttentionSpec{}), 4));
  for (const auto& g : graphs)
    for (int rep = 0; rep < 5; ++rep) gap = std::max(gap, logit_gap(g, ++seed));
  const bool mask_ok = gap <= kMaskTol;
  o.notes.push_back("apply_mask kept-logit max rel gap " + sci(gap) + " (tol " + sci(kMaskTol) + ")");

  bool flops_ok = true;
  {
    BlobsConfig bc;
    bc.samples = 512;
    bc.seed = 5;
    const Dataset all = make_blobs(bc);
    const Dataset train = subset(all, 0, 384), test = subset(all, 384, 128);
    MlpSpec s;
    s.inputs = 8;
    s.hidden = {32, 32};
    s.outputs = 4;
    NetworkGraph g = build(mlp_json(s), 5);
    TrainConfig tc;
    tc.lr = 0.05;
    tc.epochs = 5;
    tc.lr_drop_epochs = {};
    sgd_train(g, train, tc);
    for (Criterion c : {Criterion::OBA, Criterion::Taylor, Criterion::Weight, Criterion::Random}) {
      PruneConfig pc;
      pc.scoring.criterion = c;
      pc.target_flops = 0.3;
      const PruneResult r = prune_to_target(g, train, test, pc);
      for (std::size_t i = 1; i < r.steps.size(); ++i) flops_ok = flops_ok && r.steps[i].flops < r.steps[i - 1].flops;
    }
  }
  o.notes.push_back(std::string("FLOPs strictly decrease across prune steps for 4 criteria: ") +
                    (flops_ok ? "yes" : "no"));

  const bool norm_ok =
      normalize_vector({1, 2, 3}, Normalization::Standardization) == std::vector<double>{0, 0.5, 1} &&
      normalize_vector({2, 2}, Normalization::Standardization) == std::vector<double>{0, 0} &&
      normalize_vector({-4, 2}, Normalization::Max) == std::vector<double>{-1, 0.5} &&
      normalize_vector({3, 4}, Normalization::L2) == std::vector<double>{0.6, 0.8} &&
      normalize_vector({0, 0}, Normalization::Max) == std::vector<double>{0, 0} &&
      normalize_vector({0, 0}, Normalization::L2) == std::vector<double>{0, 0} &&
      normalize_vector({5, -1}, Normalization::None) == std::vector<double>{5, -1};
  o.notes.push_back(std::string("normalization unit cases exact: ") + (norm_ok ? "yes" : "no"));

  std::mt19937_64 rng(77);
  std::size_t rank_bad = 0;
  for (std::size_t v = 0; v < kRankVectors; ++v) {
    const std::size_t ngroups = 1 + rng() % 3;
    std::vector<std::size_t> sizes;
    NeuronScores s;
    std::size_t total = 0;
    for (std::size_t k = 0; k < ngroups; ++k) {
      sizes.push_back(2 + rng() % 30);
      total += sizes.back();
      std::vector<double> grp(sizes.back());
      // Coarse values force ties.
      for (double& x : grp) x = static_cast<double>(static_cast<int>(rng() % 40) - 20) / 4.0;
      s.groups.push_back(std::move(grp));
    }
    const std::size_t count = rng() % total;
    const PruneMask m = rank_and_select_count(mlp_with_groups(sizes), s, count);
    if (m.keep != selection_oracle(s.groups, count)) ++rank_bad;
  }
  o.notes.push_back("rank_and_select vs brute-force oracle: " + std::to_string(kRankVectors - rank_bad) + "/" +
                    std::to_string(kRankVectors) + " vectors agree");

  o.pass = mask_ok && flops_ok && norm_ok && rank_bad == 0;
  o.summary = "mask equivalence, FLOPs monotonicity, normalization units, rank oracle";
  return o;
}

int cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"oba"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

/// Returns the number of differing or missing files between two trees.
std::size_t tree_diff(const fs::path& a, const fs::path& b, std::size_t& files) {
  std::size_t bad = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || read_text(e.path()) != read_text(other)) ++bad;
  }
  return bad;
}

Outcome determinism() {
  const fs::path data = OBA_TEST_DATA;
  const fs::path root = fs::temp_directory_path() / "oba_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  auto config = [&](const std::string& name, const std::function<void(json&)>& edit) {
    json j = json::parse(read_text(data / (name + ".json")));
    if (j.contains("network")) j["network"] = (data / j["network"].get<std::string>()).string();
    edit(j);
    const fs::path p = root / (name + "_" + std::to_string(std::hash<std::string>{}(j.dump()) % 100000) + ".json");
    write_text(p, j.dump(2));
    return p;
  };
  auto keep = [](json&) {};
  const fs::path model = root / "seed_model";
  if (cli({"train", "--config", config("train_mlp", keep).string(), "--out", model.string()}) != kExitOk)
    return {false, "could not train the seed model", {}};
  auto with_model = [&](json& j) {
    j.erase("network");
    j["model"] = (model / "model").string();
  };
  auto small_verify = [](json& j) {
    j["verify"] = {{"graphs", 6}, {"fd_draws", 3}, {"adjoint_draws", 5}, {"random_graphs", 1}};
  };
  struct Job {
    std::string name, command;
    fs::path cfg;
  };
  const std::vector<Job> jobs{
      {"train", "train", config("train_mlp", keep)},
      {"finetune", "finetune", config("prune_mlp", with_model)},
      {"eval", "eval", config("train_mlp", with_model)},
      {"score", "score", config("score_mlp", keep)},
      {"prune_structured", "prune", config("prune_mlp", keep)},
      {"prune_unstructured", "prune", config("prune_unstructured", keep)},
      {"spearman", "spearman", config("spearman_mlp", keep)},
      {"verify", "verify", config("verify", small_verify)},
  };
  Outcome o;
  o.pass = true;
  std::size_t total_files = 0;
  for (const Job& job : jobs) {
    const fs::path a = root / (job.name + "_a"), b = root / (job.name + "_b");
    const int ca = cli({job.command, "--config", job.cfg.string(), "--out", a.string()});
    const int cb = cli({job.command, "--config", job.cfg.string(), "--out", b.string()});
    std::size_t files = 0;
    const std::size_t bad = ca == kExitOk && cb == kExitOk ? tree_diff(a, b, files) : 1;
    total_files += files;
    const bool ok = bad == 0 && files > 0;
    o.pass = o.pass && ok;
    o.notes.push_back(job.name + ": " + std::to_string(files) + " files, " + (ok ? "identical" : "DIFFERENT") +
                      " (exit " + std::to_string(ca) + "/" + std::to_string(cb) + ")");
  }
  o.summary = std::to_string(jobs.size()) + " CLI runs repeated with identical config and seed, " +
              std::to_string(total_files) + " output files compared byte for byte";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"formula-oracle equivalence", oracle_equivalence},
      {"exactness constructions", exactness},
      {"JVPF finite differences", jvp_finite_differences},
      {"adjoint identity", adjoint},
      {"Spearman property", spearman_property},
      {"structured pipeline", structured_pipeline},
      {"unstructured multistage", unstructured_multistage_check},
      {"pruning mechanics", pruning_mechanics},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (only != 0 && only != id) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what(), {}};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d %s: %s | %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.summary.c_str(), secs);
    for (const auto& n : o.notes) std::printf("  note: %s\n", n.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
