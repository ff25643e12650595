#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oba/graph.hpp"
#include "oba/scoring.hpp"

namespace oba {

/// Tolerances of the verification suite.
struct VerifyTolerances {
  double oracle = 1e-8;
  double exactness = 1e-4;
  double jvp_fd = 1e-5;
  double adjoint = 1e-10;
  /// Relative-error denominators are floored here.
  double floor = 1e-12;
};

struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

struct OracleSuiteConfig {
  std::size_t graphs = 24;
  std::uint64_t seed = 0;
  std::size_t batch = 2;
  std::size_t cap = 5000;
  ScoreOptions options;
};

struct OracleMismatch {
  std::size_t graph = 0;
  std::string family;
  std::string layer;
  std::string component;
  double error = 0.0;
};

struct OracleSuiteResult {
  std::size_t graphs = 0;
  double max_error = 0.0;
  double seconds = 0.0;
  /// Worst entry per (graph, layer, component) above tolerance.
  std::vector<OracleMismatch> mismatches;
};

/// Elementwise relative error of OBA second-order parts against the dense
/// oracle on seeded random tiny graphs cycling MLP, CNN, attention.
OracleSuiteResult oracle_suite(const OracleSuiteConfig& cfg, const VerifyTolerances& tol = {});

/// Deep linear and bilinear constructions against the finite-difference HVP.
std::vector<CheckResult> exactness_checks(std::uint64_t seed, const VerifyTolerances& tol = {});

struct DirectionalCheck {
  std::string name;
  double max_error = 0.0;
  std::size_t checked = 0;
  /// Draws whose perturbation crossed a ReLU sign or MaxPool winner.
  std::size_t skipped = 0;
};

/// One probe node per supported kind.
std::vector<LayerNode> probe_nodes(std::uint64_t seed);

/// layer_jvp against central differences of layer_forward, per kind. The
/// error of one draw is max|jvp - fd| / max(max|fd|, floor).
std::vector<DirectionalCheck> layer_jvp_fd_checks(std::uint64_t seed, std::size_t draws,
                                                  const VerifyTolerances& tol = {});

/// jvp_sweep (random parameter and input tangents) and jvpf_run (delta = theta)
/// against central differences of every node output on random whole graphs.
std::vector<DirectionalCheck> graph_jvp_fd_checks(std::uint64_t seed, std::size_t graphs,
                                                  const VerifyTolerances& tol = {});

/// <u, JVP v> against <VJP u, v> per kind; error |a - b| / max(|a|, |b|, floor).
std::vector<DirectionalCheck> adjoint_checks(std::uint64_t seed, std::size_t draws,
                                             const VerifyTolerances& tol = {});

}  // namespace oba
