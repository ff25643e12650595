#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oba/connectivity.hpp"
#include "oba/model_zoo.hpp"
#include "oba/pruning.hpp"
#include "oba/spearman.hpp"

using namespace oba;

TEST(Spearman, PerfectAndReversedOrder) {
  EXPECT_DOUBLE_EQ(*spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(*spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
}

TEST(Spearman, MatchesRankDifferenceFormulaWithoutTies) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> a(40), b(40);
  for (std::size_t i = 0; i < 40; ++i) {
    a[i] = n(rng);
    b[i] = a[i] + n(rng);
  }
  const auto ra = average_ranks(a), rb = average_ranks(b);
  double d2 = 0.0;
  for (std::size_t i = 0; i < 40; ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  const double want = 1.0 - 6.0 * d2 / (40.0 * (40.0 * 40.0 - 1.0));
  EXPECT_NEAR(*spearman(a, b), want, 1e-12);
}

TEST(Spearman, TiesShareAverageRank) {
  EXPECT_EQ(average_ranks({1, 2, 2, 3}), (std::vector<double>{1, 2.5, 2.5, 4}));
  EXPECT_EQ(average_ranks({5, 5, 5}), (std::vector<double>{2, 2, 2}));
}

TEST(Spearman, ConstantSideIsUndefined) {
  EXPECT_FALSE(spearman({1, 1, 1}, {1, 2, 3}).has_value());
  EXPECT_FALSE(spearman({1, 2}, {3, 3}).has_value());
}

TEST(Spearman, GroundTruthAsEstimateCorrelatesPerfectly) {
  MlpSpec s;
  s.inputs = 6;
  s.hidden = {10, 7};
  s.outputs = 3;
  const NetworkGraph g = build(mlp_json(s), 4);
  const Batch eval = random_batch(g, 32, 5);
  const auto layers = prunable_layers(g);
  ASSERT_EQ(layers.size(), 2u);
  NeuronScores est;
  for (std::size_t l : layers) est.groups.push_back(masking_ground_truth(g, eval, l));
  const SpearmanResult r = spearman_eval(g, eval, layers, est, Normalization::Max);
  ASSERT_TRUE(r.per_layer_mean.has_value());
  EXPECT_NEAR(*r.per_layer_mean, 1.0, 1e-12);
  EXPECT_EQ(r.rows.size(), 17u);
}
