#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "oba/dataset.hpp"
#include "oba/mask.hpp"
#include "oba/pruning.hpp"
#include "oba/scoring.hpp"
#include "oba/trainer.hpp"
#include "oba/workflows.hpp"

namespace oba {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

struct DatasetSpec {
  /// "blobs", "spirals" or "idx".
  std::string kind = "blobs";
  BlobsConfig blobs;
  std::size_t eval_samples = 256;
  double noise = 0.1;
  std::filesystem::path images, labels, eval_images, eval_labels;
};

struct SpearmanSpec {
  std::vector<Criterion> criteria{Criterion::OBA, Criterion::Taylor, Criterion::Weight, Criterion::Random};
  std::vector<Normalization> normalizations{Normalization::None, Normalization::Standardization, Normalization::Max,
                                            Normalization::L2};
  std::size_t eval_samples = 512;
};

struct VerifySpec {
  std::size_t graphs = 24;
  std::size_t fd_draws = 20;
  std::size_t adjoint_draws = 100;
  std::size_t random_graphs = 5;
  std::size_t cap = 5000;
  /// Flip the sign of the parallel term to exercise failure reporting.
  bool fault_parallel_sign = false;
};

/// Parsed JSON run configuration; paths are resolved against the config's
/// directory.
struct RunConfig {
  std::filesystem::path network;
  /// Directory written by a previous train/prune/finetune run.
  std::filesystem::path model;
  DatasetSpec dataset;
  bool has_dataset = false;
  TrainConfig train;
  std::optional<TrainConfig> finetune;
  ScoringConfig scoring;
  PruneMask::Mode mode = PruneMask::Mode::Structured;
  double target_flops = 0.5;
  ScheduleConfig schedule;
  bool iterative = false;
  std::vector<double> sparsity_levels;
  SpearmanSpec spearman;
  VerifySpec verify;
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;
};

/// Throws ConfigError on unknown keys, bad values or inconsistent settings.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Train and evaluation splits described by the spec.
std::pair<Dataset, Dataset> load_datasets(const DatasetSpec& spec, std::uint64_t seed);

/// 17 significant digits ("%.17g"); "nan" / "inf" spelled out.
std::string format_real(double v);

/// Entry point shared by the executable and tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace oba
