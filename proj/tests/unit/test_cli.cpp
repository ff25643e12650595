#include <gtest/gtest.h>

#include <json.hpp>

#include <filesystem>
#include <sstream>

#include "oba/cli.hpp"
#include "oba/errors.hpp"
#include "oba/network_io.hpp"

using namespace oba;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kData = OBA_TEST_DATA;

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("oba_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  std::vector<const char*> argv{"oba"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  write_text(p, j.dump(2));
  return p;
}

json fixture(const std::string& name) {
  json j = json::parse(read_text(kData / (name + ".json")));
  if (j.contains("network")) j["network"] = (kData / j["network"].get<std::string>()).string();
  return j;
}

std::vector<std::string> lines(const fs::path& p) {
  std::vector<std::string> out;
  std::istringstream in(read_text(p));
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string c; std::getline(in, c, ',');) out.push_back(c);
  return out;
}

void expect_same_tree(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(read_text(e.path()), read_text(b / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 0u);
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"train"}).code, kExitUsage);
  EXPECT_EQ(run({"dance", "--config", (kData / "train_mlp.json").string()}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--config", "/nonexistent/config.json"}).code, kExitUsage);
}

TEST(Cli, UnknownConfigKeyIsRejected) {
  const fs::path d = scratch("unknown");
  json j = fixture("train_mlp");
  j["learning_rate"] = 0.1;
  const CliRun r = run({"train", "--config", write_config(d, j).string(), "--out", (d / "out").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;
}

TEST(Cli, TrainThenEvalReloadsModel) {
  const fs::path d = scratch("train");
  const CliRun t = run({"train", "--config", write_config(d, fixture("train_mlp")).string(), "--out",
                     (d / "train").string()});
  ASSERT_EQ(t.code, kExitOk) << t.err;
  for (const char* f : {"model/network.json", "model/model.bin", "history.csv", "metrics.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(d / "train" / f)) << f;
  EXPECT_EQ(lines(d / "train" / "history.csv").size(), 9u);

  json e = fixture("train_mlp");
  e.erase("network");
  e["model"] = (d / "train" / "model").string();
  const fs::path ed = d / "eval";
  fs::create_directories(ed);
  const CliRun r = run({"eval", "--config", write_config(ed, e).string(), "--out", (ed / "out").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto m = lines(d / "train" / "metrics.csv"), ev = lines(ed / "out" / "eval.csv");
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m, ev);
}

TEST(Cli, ScoreSummaryAddsUp) {
  const fs::path d = scratch("score");
  const CliRun r = run({"score", "--config", write_config(d, fixture("score_mlp")).string(), "--out",
                     (d / "out").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto rows = lines(d / "out" / "summary.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "layer,entries,score_sum,first_order_sum,second_order_sum,upper_sum,lower_sum,parallel_sum");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c = split(rows[i]);
    const double total = std::stod(c[2]), first = std::stod(c[3]), second = std::stod(c[4]);
    const double parts = std::stod(c[5]) + std::stod(c[6]) + std::stod(c[7]);
    EXPECT_NEAR(total, first + second, 1e-12 * (1.0 + std::abs(total)));
    EXPECT_NEAR(second, parts, 1e-12 * (1.0 + std::abs(second)));
  }
  EXPECT_TRUE(fs::exists(d / "out" / "importance.bin"));
}

TEST(Cli, SingleLayerHasNoSecondOrderPart) {
  const fs::path d = scratch("single");
  json j = fixture("score_mlp");
  j["network"] = (kData / "linear_only.json").string();
  const CliRun r = run({"score", "--config", write_config(d, j).string(), "--out", (d / "out").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto rows = lines(d / "out" / "summary.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(std::stod(split(rows[1])[4]), 0.0);
}

TEST(Cli, WeightCriterionNeedsNoDataset) {
  const fs::path d = scratch("weight");
  json j = fixture("score_mlp");
  j.erase("dataset");
  j["criterion"] = "weight";
  EXPECT_EQ(run({"score", "--config", write_config(d, j).string(), "--out", (d / "out").string()}).code, kExitOk);
  j["criterion"] = "oba";
  EXPECT_EQ(run({"score", "--config", write_config(d, j).string(), "--out", (d / "out2").string()}).code,
            kExitUsage);
}

TEST(Cli, StructuredPruneReport) {
  const fs::path d = scratch("prune");
  const CliRun r = run({"prune", "--config", write_config(d, fixture("prune_mlp")).string(), "--out",
                     (d / "out").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto rows = lines(d / "out" / "prune_report.csv");
  ASSERT_GE(rows.size(), 3u);
  EXPECT_EQ(rows[0], "step,p,flops,params,accuracy");
  const double f0 = std::stod(split(rows[1])[2]), fl = std::stod(split(rows.back())[2]);
  EXPECT_LE(fl, 0.5 * f0);
  const NetworkGraph g = load_network(d / "out" / "model" / "network.json");
  EXPECT_EQ(static_cast<double>(count_flops(g).flops), fl);
}

TEST(Cli, UnstructuredPruneStages) {
  const fs::path d = scratch("unstructured");
  const CliRun r = run({"prune", "--config", write_config(d, fixture("prune_unstructured")).string(), "--out",
                     (d / "out").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(lines(d / "out" / "stages.csv").size(), 4u);
  NetworkGraph g = load_network(d / "out" / "model" / "network.json");
  const auto mask = load_checkpoint(g, d / "out" / "model" / "model");
  ASSERT_TRUE(mask.has_value());
  EXPECT_EQ(mask->mode, PruneMask::Mode::Unstructured);
}

TEST(Cli, SpearmanRowsAndSanityRow) {
  const fs::path d = scratch("spearman");
  const CliRun r = run({"spearman", "--config", write_config(d, fixture("spearman_mlp")).string(), "--out",
                     (d / "out").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto rows = lines(d / "out" / "spearman.csv");
  ASSERT_EQ(rows.size(), 1u + 4u * 4u * 2u + 1u);
  EXPECT_EQ(rows.back(), "ground_truth,none,per_layer,1");
}

TEST(Cli, VerifyPassFaultAndCap) {
  const fs::path d = scratch("verify");
  json j = fixture("verify");
  j["verify"] = {{"graphs", 6}, {"fd_draws", 2}, {"adjoint_draws", 5}, {"random_graphs", 1}};
  const fs::path cfg = write_config(d, j);
  const CliRun ok = run({"verify", "--config", cfg.string(), "--out", (d / "ok").string()});
  EXPECT_EQ(ok.code, kExitOk) << ok.out << ok.err;
  EXPECT_EQ(ok.out.find("FAIL"), std::string::npos);
  const CliRun fault = run({"verify", "--config", (kData / "verify_fault.json").string(), "--out",
                         (d / "fault").string()});
  EXPECT_EQ(fault.code, kExitFailure);
  EXPECT_NE(fault.out.find("parallel"), std::string::npos);
  const CliRun cap = run({"verify", "--config", cfg.string(), "--out", (d / "cap").string(), "--cap", "10"});
  EXPECT_EQ(cap.code, kExitUsage);
  EXPECT_NE(cap.err.find("refused"), std::string::npos) << cap.err;
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const fs::path d = scratch("repeat");
  const fs::path cfg = write_config(d, fixture("prune_mlp"));
  ASSERT_EQ(run({"prune", "--config", cfg.string(), "--out", (d / "a").string()}).code, kExitOk);
  ASSERT_EQ(run({"prune", "--config", cfg.string(), "--out", (d / "b").string()}).code, kExitOk);
  expect_same_tree(d / "a", d / "b");
}

TEST(Cli, SeedOverrideChangesResults) {
  const fs::path d = scratch("seed");
  const fs::path cfg = write_config(d, fixture("train_mlp"));
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (d / "a").string()}).code, kExitOk);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (d / "b").string(), "--seed", "8"}).code, kExitOk);
  EXPECT_NE(read_text(d / "a" / "history.csv"), read_text(d / "b" / "history.csv"));
}

TEST(Config, FormatRealUsesRoundTripDigits) {
  EXPECT_EQ(format_real(0.1), "0.10000000000000001");
  EXPECT_EQ(format_real(2.0), "2");
  EXPECT_EQ(format_real(std::nan("")), "nan");
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(parse_run_config(R"({"criterion": "magic"})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"target_flops": 1.5})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"train": {"lr": -1}})"), ConfigError);
  EXPECT_THROW(parse_run_config("{not json"), ConfigError);
}
