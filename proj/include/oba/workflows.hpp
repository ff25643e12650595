#pragma once

#include <optional>
#include <vector>

#include "oba/dataset.hpp"
#include "oba/graph.hpp"
#include "oba/mask.hpp"
#include "oba/pruning.hpp"
#include "oba/scoring.hpp"
#include "oba/trainer.hpp"

namespace oba {

struct ScoringConfig {
  Criterion criterion = Criterion::OBA;
  Normalization normalization = Normalization::Max;
  /// Batches of `batch_size` taken from the start of the training set.
  std::size_t batches = 4;
  std::size_t batch_size = 64;
  DeltaRule rule;
  std::uint64_t seed = 0;
  std::size_t obd_cap = 5000;
};

struct ScheduleConfig {
  double p0 = 0.05;
  double ratio = 1.3;
  std::size_t max_steps = 50;
};

struct PruneConfig {
  ScoringConfig scoring;
  ScheduleConfig schedule;
  double target_flops = 0.5;
  /// Fine-tune after every step instead of once at the end.
  bool iterative = false;
  std::optional<TrainConfig> finetune;
};

struct PruneStep {
  std::size_t step = 0;
  /// Cumulative fraction of the original neurons requested.
  double p = 0.0;
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
  double accuracy = 0.0;
};

struct PruneResult {
  NetworkGraph graph;
  std::vector<PruneStep> steps;
  double flops_fraction = 1.0;
};

/// Ranking fraction of step k: p0 * ratio^k.
double schedule_fraction(const ScheduleConfig& s, std::size_t k);

/// Score, normalize, rank and physically remove neurons step by step until
/// FLOPs fall to `target_flops` of the original. Row 0 is the unpruned
/// network; the final row is re-evaluated after fine-tuning when one runs.
PruneResult prune_to_target(const NetworkGraph& g, const Dataset& train, const Dataset& eval,
                            const PruneConfig& cfg);

struct MultistageConfig {
  ScoringConfig scoring;
  std::vector<double> levels;
  std::optional<TrainConfig> finetune;
};

struct StageRecord {
  double level = 0.0;
  double sparsity = 0.0;
  std::size_t pruned = 0;
  double accuracy = 0.0;
  double loss = 0.0;
};

struct MultistageResult {
  NetworkGraph graph;
  PruneMask mask;
  EvalResult baseline;
  std::vector<StageRecord> stages;
};

/// Per-weight scores with |theta| added for OBA and Taylor.
ParamTensors unstructured_scores(const NetworkGraph& g, const ImportanceTable& table);

MultistageResult unstructured_multistage(const NetworkGraph& g, const Dataset& train, const Dataset& eval,
                                         const MultistageConfig& cfg);

}  // namespace oba
