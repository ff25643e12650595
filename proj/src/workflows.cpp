#include "oba/workflows.hpp"

#include <cmath>
#include <string>

#include "oba/connectivity.hpp"
#include "oba/errors.hpp"

namespace oba {

namespace {

ImportanceTable score(const NetworkGraph& g, const Dataset& train, const ScoringConfig& sc, std::uint64_t seed) {
  std::vector<Batch> batches;
  if (sc.criterion != Criterion::Weight && sc.criterion != Criterion::Random) {
    batches = take_batches(train, sc.batch_size, sc.batches);
  }
  return compute_importance(sc.criterion, g, batches, sc.rule, seed, sc.obd_cap);
}

std::size_t neuron_total(const std::vector<GroupSpec>& groups) {
  std::size_t n = 0;
  for (const auto& gr : groups) n += gr.neurons;
  return n;
}

}  // namespace

double schedule_fraction(const ScheduleConfig& s, std::size_t k) {
  return s.p0 * std::pow(s.ratio, static_cast<double>(k));
}

PruneResult prune_to_target(const NetworkGraph& g, const Dataset& train, const Dataset& eval,
                            const PruneConfig& cfg) {
  if (!(cfg.target_flops > 0.0 && cfg.target_flops < 1.0)) throw ConfigError("target FLOPs fraction must lie in (0, 1)");
  if (!(cfg.schedule.p0 > 0.0 && cfg.schedule.ratio >= 1.0)) throw ConfigError("schedule needs p0 > 0 and ratio >= 1");
  if (cfg.finetune) cfg.finetune->validate();

  PruneResult res;
  res.graph = g;
  const FlopCount base = count_flops(g);
  const double limit = cfg.target_flops * static_cast<double>(base.flops);
  const std::size_t original = neuron_total(discover_groups(g));
  std::size_t removed = 0;

  res.steps.push_back({0, 0.0, base.flops, base.params, evaluate(g, eval).accuracy});
  double best_fraction = 1.0;
  for (std::size_t k = 0; k < cfg.schedule.max_steps; ++k) {
    if (static_cast<double>(count_flops(res.graph).flops) <= limit) break;
    const double p = std::min(schedule_fraction(cfg.schedule, k), 1.0);
    const auto wanted = static_cast<std::size_t>(std::floor(p * static_cast<double>(original)));
    if (wanted <= removed && p < 1.0) continue;

    const auto groups = discover_groups(res.graph);
    const ImportanceTable t = score(res.graph, train, cfg.scoring, cfg.scoring.seed + k);
    const NeuronScores ns = normalize_scores(gather_neuron_scores(res.graph, t, groups), cfg.scoring.normalization);
    const PruneMask mask = rank_and_select_count(res.graph, ns, wanted > removed ? wanted - removed : 0);
    if (mask.pruned == 0) break;
    removed += mask.pruned;
    res.graph = apply_mask(res.graph, mask);
    if (cfg.iterative && cfg.finetune) sgd_train(res.graph, train, *cfg.finetune);

    const FlopCount fc = count_flops(res.graph);
    best_fraction = static_cast<double>(fc.flops) / static_cast<double>(base.flops);
    res.steps.push_back({k + 1, p, fc.flops, fc.params, evaluate(res.graph, eval).accuracy});
  }
  res.flops_fraction = static_cast<double>(count_flops(res.graph).flops) / static_cast<double>(base.flops);
  if (static_cast<double>(count_flops(res.graph).flops) > limit) {
    throw ConfigError("schedule exhausted before reaching the FLOPs target; closest fraction " +
                      std::to_string(best_fraction));
  }
  if (cfg.finetune && !cfg.iterative) {
    sgd_train(res.graph, train, *cfg.finetune);
    res.steps.back().accuracy = evaluate(res.graph, eval).accuracy;
  }
  return res;
}

ParamTensors unstructured_scores(const NetworkGraph& g, const ImportanceTable& table) {
  ParamTensors s = table.scores;
  if (table.criterion != Criterion::OBA && table.criterion != Criterion::Taylor) return s;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Tensor& w = g.node(i).weight;
    for (std::size_t q = 0; q < w.size(); ++q) s[i].weight[q] += std::abs(w[q]);
  }
  return s;
}

MultistageResult unstructured_multistage(const NetworkGraph& g, const Dataset& train, const Dataset& eval,
                                         const MultistageConfig& cfg) {
  for (std::size_t i = 0; i < cfg.levels.size(); ++i) {
    if (!(cfg.levels[i] >= 0.0 && cfg.levels[i] < 1.0)) throw ConfigError("sparsity levels must lie in [0, 1)");
    if (i > 0 && cfg.levels[i] <= cfg.levels[i - 1]) throw ConfigError("sparsity levels must be ascending");
  }
  if (cfg.finetune) cfg.finetune->validate();

  MultistageResult res;
  res.graph = g;
  res.mask = full_unstructured_mask(g);
  res.baseline = evaluate(g, eval);
  for (std::size_t k = 0; k < cfg.levels.size(); ++k) {
    const double level = cfg.levels[k];
    PruneMask next = res.mask;
    if (level > 0.0) {
      const ImportanceTable t = score(res.graph, train, cfg.scoring, cfg.scoring.seed + k);
      next = select_unstructured(res.graph, unstructured_scores(res.graph, t), level, &res.mask);
    }
    const bool grew = next.pruned > res.mask.pruned;
    res.mask = next;
    if (grew) {
      enforce_mask(res.graph, res.mask);
      if (cfg.finetune) sgd_train(res.graph, train, *cfg.finetune, &res.mask);
    }
    const EvalResult ev = evaluate(res.graph, eval);
    res.stages.push_back({level, res.mask.sparsity, res.mask.pruned, ev.accuracy, ev.loss});
  }
  return res;
}

}  // namespace oba
