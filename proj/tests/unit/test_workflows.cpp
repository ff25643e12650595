#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oba/connectivity.hpp"
#include "oba/errors.hpp"
#include "oba/model_zoo.hpp"
#include "oba/network_io.hpp"
#include "oba/workflows.hpp"

using namespace oba;

namespace {

struct Fixture {
  NetworkGraph graph;
  Dataset train, eval;
};

Fixture trained_mlp(std::uint64_t seed) {
  MlpSpec s;
  s.inputs = 8;
  s.hidden = {32, 32};
  s.outputs = 4;
  Fixture f{build(mlp_json(s), seed), {}, {}};
  BlobsConfig cfg;
  cfg.samples = 512;
  cfg.seed = seed;
  const Dataset all = make_blobs(cfg);
  f.train = subset(all, 0, 384);
  f.eval = subset(all, 384, 128);
  TrainConfig tc;
  tc.lr = 0.05;
  tc.epochs = 5;
  tc.lr_drop_epochs = {};
  sgd_train(f.graph, f.train, tc);
  return f;
}

}  // namespace

TEST(Schedule, GeometricFractions) {
  ScheduleConfig s;
  EXPECT_DOUBLE_EQ(schedule_fraction(s, 0), 0.05);
  EXPECT_NEAR(schedule_fraction(s, 2), 0.05 * 1.3 * 1.3, 1e-15);
}

TEST(PruneToTarget, LooseTargetNeedsOneStep) {
  const Fixture f = trained_mlp(1);
  PruneConfig cfg;
  cfg.target_flops = 0.999;
  const PruneResult r = prune_to_target(f.graph, f.train, f.eval, cfg);
  ASSERT_EQ(r.steps.size(), 2u);
  EXPECT_EQ(r.steps[0].step, 0u);
  EXPECT_LE(r.flops_fraction, 0.999);
}

TEST(PruneToTarget, FlopsDecreaseAndLandNearTarget) {
  const Fixture f = trained_mlp(2);
  for (Criterion c : {Criterion::OBA, Criterion::Weight, Criterion::Random}) {
    PruneConfig cfg;
    cfg.scoring.criterion = c;
    cfg.target_flops = 0.5;
    const PruneResult r = prune_to_target(f.graph, f.train, f.eval, cfg);
    for (std::size_t i = 1; i < r.steps.size(); ++i) EXPECT_LT(r.steps[i].flops, r.steps[i - 1].flops);
    EXPECT_LE(r.flops_fraction, 0.5);
    EXPECT_GE(r.flops_fraction, 0.40) << criterion_name(c);
    EXPECT_EQ(count_flops(r.graph).flops, r.steps.back().flops);
  }
}

TEST(PruneToTarget, ExhaustedScheduleReportsClosestFraction) {
  const Fixture f = trained_mlp(3);
  PruneConfig cfg;
  cfg.target_flops = 0.05;
  cfg.schedule.max_steps = 3;
  try {
    prune_to_target(f.graph, f.train, f.eval, cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("closest"), std::string::npos) << e.what();
  }
}

TEST(PruneToTarget, FineTuningUpdatesFinalRow) {
  const Fixture f = trained_mlp(4);
  PruneConfig cfg;
  cfg.target_flops = 0.5;
  TrainConfig ft;
  ft.lr = 0.01;
  ft.epochs = 1;
  ft.lr_drop_epochs = {};
  cfg.finetune = ft;
  const PruneResult r = prune_to_target(f.graph, f.train, f.eval, cfg);
  EXPECT_NEAR(r.steps.back().accuracy, evaluate(r.graph, f.eval).accuracy, 1e-15);
}

TEST(Multistage, ZeroLevelEqualsBaseline) {
  const Fixture f = trained_mlp(5);
  MultistageConfig cfg;
  cfg.levels = {0.0};
  const MultistageResult r = unstructured_multistage(f.graph, f.train, f.eval, cfg);
  ASSERT_EQ(r.stages.size(), 1u);
  EXPECT_EQ(r.stages[0].pruned, 0u);
  EXPECT_EQ(r.stages[0].accuracy, r.baseline.accuracy);
  EXPECT_EQ(r.stages[0].loss, r.baseline.loss);
}

TEST(Multistage, WeightCriterionPrunesSmallestMagnitudes) {
  const Fixture f = trained_mlp(6);
  MultistageConfig cfg;
  cfg.scoring.criterion = Criterion::Weight;
  cfg.levels = {0.3};
  const MultistageResult r = unstructured_multistage(f.graph, f.train, f.eval, cfg);
  std::vector<double> mags;
  for (std::size_t l : f.graph.parameter_layers())
    for (double w : f.graph.node(l).weight.storage()) mags.push_back(std::abs(w));
  const std::size_t k = static_cast<std::size_t>(std::floor(0.3 * static_cast<double>(mags.size())));
  EXPECT_EQ(r.mask.pruned, k);
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  const double threshold = sorted[k - 1];
  for (std::size_t l : f.graph.parameter_layers())
    for (std::size_t i = 0; i < f.graph.node(l).weight.size(); ++i)
      if (r.mask.weight_masks[l][i] == 0.0) EXPECT_LE(std::abs(f.graph.node(l).weight[i]), threshold);
}

TEST(Multistage, MasksGrowAcrossLevels) {
  const Fixture f = trained_mlp(7);
  MultistageConfig cfg;
  cfg.levels = {0.2, 0.5, 0.8};
  const MultistageResult r = unstructured_multistage(f.graph, f.train, f.eval, cfg);
  ASSERT_EQ(r.stages.size(), 3u);
  for (std::size_t i = 1; i < 3; ++i) EXPECT_GT(r.stages[i].pruned, r.stages[i - 1].pruned);
  for (std::size_t l : r.graph.parameter_layers())
    for (std::size_t i = 0; i < r.graph.node(l).weight.size(); ++i)
      if (r.mask.weight_masks[l][i] == 0.0) EXPECT_EQ(r.graph.node(l).weight[i], 0.0);
}

TEST(Multistage, RejectsUnorderedLevels) {
  const Fixture f = trained_mlp(8);
  MultistageConfig cfg;
  cfg.levels = {0.5, 0.3};
  EXPECT_THROW(unstructured_multistage(f.graph, f.train, f.eval, cfg), ConfigError);
  cfg.levels = {1.0};
  EXPECT_THROW(unstructured_multistage(f.graph, f.train, f.eval, cfg), ConfigError);
}
