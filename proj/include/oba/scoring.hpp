#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "oba/dataset.hpp"
#include "oba/graph.hpp"
#include "oba/params.hpp"

namespace oba {

enum class Criterion { OBA, Taylor, Weight, OBD, Random };

std::string_view criterion_name(Criterion c);
Criterion parse_criterion(std::string_view name);

struct ImportanceTable {
  Criterion criterion = Criterion::OBA;
  std::size_t batches = 0;
  bool aggregated = false;
  std::string rule = "param";
  std::string graph_hash;
  /// Total score per parameter entry, aligned with the graph's nodes.
  ParamTensors scores;
  /// OBA decomposition; empty for other criteria.
  ParamTensors first_order;
  ParamTensors upper;
  ParamTensors lower;
  ParamTensors parallel;

  bool has_components() const { return !first_order.empty(); }
  /// upper + lower + parallel.
  ParamTensors second_order() const;
};

struct ScoreOptions {
  /// Multiplier on the parallel term; -1 is a deliberate fault for checks.
  double parallel_sign = 1.0;
};

ImportanceTable oba_score_batch(const NetworkGraph& g, const Tensor& batch, const Tensor& targets,
                                const DeltaRule& rule, const ScoreOptions& opts = {});

/// Mean of per-batch tables, in batch order.
ImportanceTable mean_tables(std::span<const ImportanceTable> tables);

ImportanceTable oba_importance(const NetworkGraph& g, std::span<const Batch> batches, const DeltaRule& rule,
                               const ScoreOptions& opts = {});
ImportanceTable taylor_importance(const NetworkGraph& g, std::span<const Batch> batches);
ImportanceTable weight_importance(const NetworkGraph& g);
/// Half squared parameter times the finite-difference Hessian diagonal.
/// Refuses graphs with more than `cap` parameters.
ImportanceTable obd_importance(const NetworkGraph& g, std::span<const Batch> batches, std::size_t cap = 5000);
ImportanceTable random_importance(const NetworkGraph& g, std::uint64_t seed);

/// Dispatch by criterion. Random uses `seed`; Weight ignores the batches.
ImportanceTable compute_importance(Criterion c, const NetworkGraph& g, std::span<const Batch> batches,
                                   const DeltaRule& rule, std::uint64_t seed, std::size_t obd_cap = 5000);

/// <stem>.json manifest plus <stem>.bin scores (little-endian float64).
void save_importance(const ImportanceTable& t, const NetworkGraph& g, const std::filesystem::path& stem);
ImportanceTable load_importance(const NetworkGraph& g, const std::filesystem::path& stem);

}  // namespace oba
