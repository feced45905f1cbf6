#include "echmm/dataset.hpp"
#include "echmm/market_data.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <random>

namespace fs = std::filesystem;
using echmm::testing::read_file;
using echmm::testing::TempDir;
using echmm::testing::write_file;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run_cli(const std::string& args, const TempDir& dir) {
  const auto out = dir.file("stdout.txt"), err = dir.file("stderr.txt");
  const std::string cmd = std::string(ECHMM_CLI_PATH) + " " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

// 3 stocks x 30 trading days plus a 4-dimensional embedding file.
void write_fixture(const TempDir& dir, int dim) {
  const auto panel = echmm::testing::random_panel(3, 30, 21);
  echmm::write_price_csv(panel, dir.file("prices.csv"));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  std::string text = "stock_id,date";
  for (int d = 0; d < dim; ++d) text += ",v" + std::to_string(d);
  text += "\n";
  for (int t = 0; t < 30; t += 2)
    for (int s = 0; s < 3; ++s) {
      text += panel.stock_ids()[s] + "," + panel.dates()[t];
      for (int d = 0; d < dim; ++d) text += "," + std::to_string(n01(rng) + (t % 3));
      text += "\n";
    }
  write_file(dir.file("emb.csv"), text);
}

const char* kPrepareFlags = "--set events.dim=4 --set events.clusters=3";

std::vector<std::string> files_in(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

void expect_identical_dirs(const fs::path& a, const fs::path& b) {
  ASSERT_EQ(files_in(a), files_in(b));
  for (const auto& name : files_in(a))
    EXPECT_EQ(read_file((a / name).string()), read_file((b / name).string())) << name;
}

std::string synth_spec(const TempDir& dir, const std::string& body) {
  write_file(dir.file("spec.json"), body);
  return dir.file("spec.json");
}

}  // namespace

TEST(Cli, PrepareWritesArtifactsDeterministically) {
  TempDir dir;
  write_fixture(dir, 4);
  const std::string base = std::string(kPrepareFlags) + " prepare --prices " + dir.file("prices.csv") +
                            " --embeddings " + dir.file("emb.csv") + " --out ";
  const auto r = run_cli(base + dir.file("ds1"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* name : {"panel.csv", "graph.csv", "codebook.csv", "events.csv"})
    EXPECT_TRUE(fs::exists(dir.file("ds1") + "/" + name)) << name;
  ASSERT_EQ(run_cli(base + dir.file("ds2"), dir).code, 0);
  expect_identical_dirs(dir.file("ds1"), dir.file("ds2"));
}

TEST(Cli, WrongEmbeddingDimensionIsValidationError) {
  TempDir dir;
  write_fixture(dir, 3);
  const auto r = run_cli(std::string(kPrepareFlags) + " prepare --prices " + dir.file("prices.csv") +
                             " --embeddings " + dir.file("emb.csv") + " --out " + dir.file("ds"),
                         dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("shape error"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("dimension"), std::string::npos) << r.err;
}

TEST(Cli, MalformedPriceFileNamesTheLine) {
  TempDir dir;
  write_fixture(dir, 4);
  write_file(dir.file("prices.csv"), "stock_id,date,open,high,low,close\nA,2021-01-04,1,2,0.5,1\nA,2021-01-05,x,2,1,1\n");
  const auto r = run_cli(std::string(kPrepareFlags) + " prepare --prices " + dir.file("prices.csv") +
                             " --embeddings " + dir.file("emb.csv") + " --out " + dir.file("ds"),
                         dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("prices.csv:3"), std::string::npos) << r.err;
}

TEST(Cli, SynthSingleStockAndDeterminism) {
  TempDir dir;
  const auto spec = synth_spec(dir, R"({"stocks": 1, "days": 40, "seed": 3})");
  ASSERT_EQ(run_cli("synth " + spec + " --out " + dir.file("a"), dir).code, 0);
  ASSERT_EQ(run_cli("synth " + spec + " --out " + dir.file("b"), dir).code, 0);
  EXPECT_TRUE(fs::exists(dir.file("a") + "/true_states.csv"));
  const auto panel = echmm::load_dataset(dir.file("a")).panel;
  EXPECT_EQ(panel.num_stocks(), 1);
  EXPECT_EQ(panel.num_days(), 40);
  expect_identical_dirs(dir.file("a"), dir.file("b"));
}

TEST(Cli, SynthSparsityDropsAboutHalf) {
  TempDir dir;
  const auto spec = synth_spec(dir, R"({"stocks": 2, "days": 200, "seed": 4, "event_sparsity": 0.5})");
  ASSERT_EQ(run_cli("synth " + spec + " --out " + dir.file("a"), dir).code, 0);
  const auto events = echmm::load_dataset(dir.file("a")).events;
  const double n = 400.0;
  // Forward-fill (the default policy) occupies the remaining cells, flagged as filled.
  EXPECT_NEAR(static_cast<double>(events.originals().count()), 0.5 * n, 3.0 * std::sqrt(n * 0.25));
  EXPECT_GE(events.count(), events.originals().count());
}

TEST(Cli, SynthSpecErrorsNameTheKey) {
  TempDir dir;
  const auto spec = synth_spec(dir, R"({"stocks": 2, "persistence": 2})");
  const auto r = run_cli("synth " + spec + " --out " + dir.file("a"), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("spec.persistence"), std::string::npos) << r.err;
}

TEST(Cli, BacktestSweepEvalAndReruns) {
  TempDir dir;
  const auto spec = synth_spec(dir, R"({"stocks": 2, "days": 60, "seed": 5, "classes": 3})");
  ASSERT_EQ(run_cli("synth " + spec + " --out " + dir.file("ds"), dir).code, 0);
  const std::string flags = "--set em.particles=60 --set em.max_iters=3 --set predict.pool_length=5 --set predict.k=3 ";
  const std::string cmd = flags + "backtest --dataset " + dir.file("ds") +
                          " --sweep pool_length=5,10 --sweep k=1,3,12 --out ";
  const auto r = run_cli(cmd + dir.file("r1"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ACC"), std::string::npos);
  EXPECT_NE(r.out.find("pooled"), std::string::npos);
  for (const char* name : {"predictions.csv", "report.json", "sweep_pool_length.csv", "sweep_k.csv"})
    EXPECT_TRUE(fs::exists(dir.file("r1") + "/" + name)) << name;
  const auto k_rows = read_file(dir.file("r1") + "/sweep_k.csv");
  EXPECT_EQ(std::count(k_rows.begin(), k_rows.end(), '\n'), 4);
  EXPECT_NE(k_rows.find("\nk,12,"), std::string::npos);

  ASSERT_EQ(run_cli(cmd + dir.file("r2"), dir).code, 0);
  expect_identical_dirs(dir.file("r1"), dir.file("r2"));

  const auto e = run_cli("eval " + dir.file("r1") + "/predictions.csv --out " + dir.file("m.json"), dir);
  EXPECT_EQ(e.code, 0) << e.err;
  EXPECT_NE(read_file(dir.file("m.json")).find("\"acc\""), std::string::npos);
}

TEST(Cli, FitWritesParamsAndLog) {
  TempDir dir;
  const auto spec = synth_spec(dir, R"({"stocks": 2, "days": 30, "seed": 6, "classes": 3})");
  ASSERT_EQ(run_cli("synth " + spec + " --out " + dir.file("ds"), dir).code, 0);
  const auto r = run_cli("--set em.particles=50 --set em.max_iters=2 fit --dataset " + dir.file("ds") +
                             " --first 0 --last 9 --out " + dir.file("fit"),
                         dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir.file("fit") + "/params.json"));
  EXPECT_FALSE(read_file(dir.file("fit") + "/training_log.jsonl").empty());
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  EXPECT_EQ(run_cli("--help", dir).code, 0);
  EXPECT_EQ(run_cli("frobnicate", dir).code, 2);
  EXPECT_EQ(run_cli("--set em.nope=1 eval x.csv", dir).code, 2);
  const auto missing = run_cli("backtest --dataset " + dir.file("nothing") + " --out " + dir.file("o"), dir);
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("echmm prepare"), std::string::npos) << missing.err;

  // An output path below a regular file cannot be created: a runtime failure.
  const auto spec = synth_spec(dir, R"({"stocks": 1, "days": 20})");
  write_file(dir.file("blocker"), "x");
  EXPECT_EQ(run_cli("synth " + spec + " --out " + dir.file("blocker") + "/sub", dir).code, 1);
}
