#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "oba/autodiff.hpp"
#include "oba/errors.hpp"
#include "oba/model_zoo.hpp"
#include "oba/oracles.hpp"
#include "oba/scoring.hpp"
#include "test_util.hpp"

using namespace oba;
using oba::testing::max_abs_entry;
using oba::testing::max_rel_err;

namespace {

void expect_oracle_match(const NetworkGraph& g, std::uint64_t seed) {
  const Batch b = random_batch(g, 2, seed);
  const auto rule = DeltaRule::param_itself();
  const ImportanceTable oba = oba_score_batch(g, b.inputs, b.targets, rule);
  const ImportanceTable dense = oracle_dense_second_order(g, b.inputs, b.targets, rule);
  EXPECT_LE(max_rel_err(oba.upper, dense.upper), 1e-8) << "upper, seed " << seed;
  EXPECT_LE(max_rel_err(oba.lower, dense.lower), 1e-8) << "lower, seed " << seed;
  EXPECT_LE(max_rel_err(oba.parallel, dense.parallel), 1e-8) << "parallel, seed " << seed;
}

}  // namespace

TEST(Scoring, SingleLinearLayerHasNoSecondOrderPart) {
  MlpSpec s;
  s.hidden.clear();
  const NetworkGraph g = build(mlp_json(s), 3);
  const Batch b = random_batch(g, 5, 1);
  const ImportanceTable t = oba_score_batch(g, b.inputs, b.targets, DeltaRule::param_itself());
  EXPECT_EQ(max_abs_entry(t.second_order()), 0.0);
  const auto grad = backward(g, forward(g, b.inputs, b.targets));
  EXPECT_EQ(t.scores[0].weight, mul(grad.params[0].weight, g.node(0).weight));
}

TEST(Scoring, MatchesDenseOracleOnMlp) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) expect_oracle_match(random_tiny_graph(seed, 0), seed);
}

TEST(Scoring, MatchesDenseOracleOnCnn) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) expect_oracle_match(random_tiny_graph(seed, 1), seed);
}

TEST(Scoring, MatchesDenseOracleOnAttention) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) expect_oracle_match(random_tiny_graph(seed, 2), seed);
}

namespace {

Tensor normal_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(std::move(s));
  for (double& v : t.storage()) v = n(rng);
  return t;
}

}  // namespace

TEST(Scoring, BilinearParallelTermMatchesHandExpansion) {
  const NetworkGraph g = build(bilinear_json(3, 3, 2), 4);
  const Batch b = random_batch(g, 2, 5);
  ParamTensors delta = zeros_like_params(g);
  const std::size_t q = g.index_of("q"), k = g.index_of("k");
  delta[q].weight = normal_tensor({2, 3}, 6);
  delta[k].weight = normal_tensor({2, 3}, 7);
  const ImportanceTable t = oba_score_batch(g, b.inputs, b.targets, DeltaRule::custom_tangents(delta));
  const std::size_t n_batch = 2;
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t i = 0; i < 3; ++i) {
      double acc = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t tt = 0; tt < 3; ++tt)
          for (std::size_t o = 0; o < 3; ++o) {
            double inner = 0.0;
            for (std::size_t j = 0; j < 3; ++j) inner += b.inputs.at(n, o, j) * delta[k].weight.at(a, j);
            acc += b.targets.at(n, tt, o) * b.inputs.at(n, tt, i) * inner;
          }
      const double want = delta[q].weight.at(a, i) * acc / static_cast<double>(n_batch);
      EXPECT_NEAR(t.parallel[q].weight.at(a, i), want, 1e-12 * (1.0 + std::abs(want)));
    }
  EXPECT_EQ(max_abs(t.upper[q].weight), 0.0);
  EXPECT_EQ(max_abs(t.lower[q].weight), 0.0);
}

TEST(Scoring, LinearConnectionTensorIsScalarOne) {
  MlpSpec s;
  s.hidden.clear();
  const NetworkGraph g = build(mlp_json(s), 1);
  const Tensor m = materialize_m(g.node(g.parameter_layers()[0]));
  EXPECT_EQ(m.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(m[0], 1.0);
}

TEST(Scoring, ObdOnQuadraticLossHasClosedForm) {
  MlpSpec s;
  s.inputs = 3;
  s.hidden.clear();
  s.outputs = 2;
  s.bias = false;
  s.loss = LossSink::Squared;
  const NetworkGraph g = build(mlp_json(s), 2);
  const Batch b = random_batch(g, 6, 3);
  const std::vector<Batch> batches{b};
  const ImportanceTable t = obd_importance(g, batches);
  const Tensor& w = g.node(0).weight;
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t j = 0; j < 3; ++j) {
      double mean_sq = 0.0;
      for (std::size_t n = 0; n < 6; ++n) mean_sq += b.inputs.at(n, j) * b.inputs.at(n, j) / 6.0;
      const double want = 0.5 * w.at(a, j) * w.at(a, j) * mean_sq;
      EXPECT_NEAR(t.scores[0].weight.at(a, j), want, 1e-6 * (1.0 + want));
    }
}

TEST(Scoring, CapRefusesLargeGraphs) {
  MlpSpec s;
  s.inputs = 8;
  s.hidden = {32};
  const NetworkGraph g = build(mlp_json(s), 1);
  const Batch b = random_batch(g, 2, 1);
  const std::vector<Batch> batches{b};
  EXPECT_THROW(obd_importance(g, batches, 100), CapExceeded);
  EXPECT_THROW(oracle_dense_second_order(g, b.inputs, b.targets, DeltaRule::param_itself(), 100), CapExceeded);
}

TEST(Scoring, TaylorIsAbsoluteFirstOrder) {
  const NetworkGraph g = random_tiny_graph(5, 0);
  const Batch b = random_batch(g, 3, 6);
  const std::vector<Batch> batches{b};
  const ImportanceTable oba = oba_importance(g, batches, DeltaRule::param_itself());
  const ImportanceTable tay = taylor_importance(g, batches);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t k = 0; k < oba.first_order[i].weight.size(); ++k)
      EXPECT_NEAR(tay.scores[i].weight[k], std::abs(oba.first_order[i].weight[k]), 1e-15);
}

TEST(Scoring, WeightIsMagnitude) {
  NetworkGraph g = build(mlp_json(MlpSpec{}), 1);
  g.weight(g.parameter_layers()[0])[0] = -3.0;
  const ImportanceTable t = weight_importance(g);
  EXPECT_EQ(t.scores[g.parameter_layers()[0]].weight[0], 3.0);
}

TEST(Scoring, BatchMeanIsOrderedAverage) {
  const NetworkGraph g = random_tiny_graph(8, 0);
  const auto rule = DeltaRule::param_itself();
  const Batch b1 = random_batch(g, 3, 1), b2 = random_batch(g, 3, 2);
  const std::vector<Batch> one{b1}, twice{b1, b1}, pair{b1, b2};
  const ImportanceTable t1 = oba_importance(g, one, rule);
  EXPECT_LE(max_rel_err(oba_importance(g, twice, rule).scores, t1.scores), 1e-15);
  const ImportanceTable t2 = oba_score_batch(g, b2.inputs, b2.targets, rule);
  const ImportanceTable mean = oba_importance(g, pair, rule);
  ParamTensors want = params_scaled(t1.scores, 0.5);
  params_axpy(0.5, t2.scores, want);
  EXPECT_LE(max_rel_err(mean.scores, want, 1e-9), 1e-12);
  EXPECT_EQ(mean.batches, 2u);
}

TEST(Scoring, ImportanceRoundTripsThroughFiles) {
  const NetworkGraph g = random_tiny_graph(9, 2);
  const Batch b = random_batch(g, 2, 3);
  const std::vector<Batch> batches{b};
  const ImportanceTable t = oba_importance(g, batches, DeltaRule::param_itself());
  const auto stem = std::filesystem::temp_directory_path() / "oba_importance_roundtrip";
  save_importance(t, g, stem);
  const ImportanceTable r = load_importance(g, stem);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(r.scores[i].weight, t.scores[i].weight);
    EXPECT_EQ(r.parallel[i].weight, t.parallel[i].weight);
  }
}

TEST(Scoring, TrueHvpAgreesWithSecondOrderOnDeepLinear) {
  const NetworkGraph g = build(deep_linear_json({3, 4, 3, 2}), 5);
  const Batch b = random_batch(g, 2, 6);
  const auto rule = DeltaRule::param_itself();
  const ImportanceTable t = oba_score_batch(g, b.inputs, b.targets, rule);
  EXPECT_LE(max_rel_err(t.second_order(), oracle_true_hvp(g, b.inputs, b.targets, rule), 1e-6), 1e-4);
}
