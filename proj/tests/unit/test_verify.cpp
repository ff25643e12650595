#include <gtest/gtest.h>

#include "oba/verify.hpp"

using namespace oba;

TEST(Verify, OracleSuiteAgreesOnSmallRun) {
  OracleSuiteConfig cfg;
  cfg.graphs = 6;
  const OracleSuiteResult r = oracle_suite(cfg);
  EXPECT_EQ(r.graphs, 6u);
  EXPECT_LE(r.max_error, 1e-8);
  EXPECT_TRUE(r.mismatches.empty());
}

TEST(Verify, FlippedParallelSignIsLocalized) {
  OracleSuiteConfig cfg;
  cfg.graphs = 3;
  cfg.options.parallel_sign = -1.0;
  const OracleSuiteResult r = oracle_suite(cfg);
  ASSERT_FALSE(r.mismatches.empty());
  for (const auto& m : r.mismatches) {
    EXPECT_EQ(m.family, "attention");
    EXPECT_EQ(m.component, "parallel");
  }
}

TEST(Verify, ExactnessConstructions) {
  for (const CheckResult& c : exactness_checks(1)) EXPECT_TRUE(c.pass) << c.name << " " << c.value;
}

TEST(Verify, EveryKindHasAProbe) {
  EXPECT_EQ(probe_nodes(0).size(), 17u);
}

TEST(Verify, LayerJvpAgainstFiniteDifferences) {
  const VerifyTolerances tol;
  for (const auto& c : layer_jvp_fd_checks(2, 5)) {
    EXPECT_LE(c.max_error, tol.jvp_fd) << c.name;
    EXPECT_GT(c.checked, 0u) << c.name;
  }
}

TEST(Verify, GraphSweepsAgainstFiniteDifferences) {
  const VerifyTolerances tol;
  for (const auto& c : graph_jvp_fd_checks(3, 3)) EXPECT_LE(c.max_error, tol.jvp_fd) << c.name;
}

TEST(Verify, AdjointIdentity) {
  const VerifyTolerances tol;
  for (const auto& c : adjoint_checks(4, 10)) EXPECT_LE(c.max_error, tol.adjoint) << c.name;
}
