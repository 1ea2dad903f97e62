#include <gtest/gtest.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "pamm/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pamm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(PAMM_CLI) + " " + args + " >" + path("stdout.txt") + " 2>" + path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  std::string read(const std::string& name) const {
    std::ifstream in(path(name), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  json read_json(const std::string& name) const { return json::parse(read(name)); }

  void simulate(const std::string& name, int n, int seed, const std::string& scenario = "cr_v1") const {
    ASSERT_EQ(run("simulate --scenario " + scenario + " --n " + std::to_string(n) + " --seed " +
                  std::to_string(seed) + " --out " + path(name)),
              0)
        << read("stderr.txt");
  }

  void small_configs() const {
    write("model.json", R"({"cuts": {"strategy": "quantiles", "n_intervals": 8}, "n_causes": 2,
      "terms": [{"kind": "intercept"}, {"kind": "smooth_time", "n_basis": 6},
                {"kind": "smooth", "feature": "x1", "n_basis": 6}, {"kind": "linear", "feature": "x2"}],
      "deep": {"inputs": ["x1", "x2", "x3"], "widths": [8, 4]}})");
    write("train.json", R"({"max_epochs": 15, "patience": 5, "learning_rate": 0.003})");
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, TransformConservesExposure) {
  write("data.csv", "id,exit,cause,x\na,1.3,1,0.5\nb,0.4,0,1.5\nc,2.0,1,-1\n");
  ASSERT_EQ(run("transform " + path("data.csv") + " --cuts event_times --out " + path("ped.csv")), 0)
      << read("stderr.txt");
  std::istringstream in(read("ped.csv"));
  const json meta = read_json("ped.cuts.json");
  EXPECT_EQ(meta["kappa"], json::parse("[0, 1.3, 2]"));
  double exposure = 0;
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "id,j,tj,delta,exposure,offset,cause,x");
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string f;
    for (int c = 0; c < 5; ++c) std::getline(ls, f, ',');
    exposure += std::stod(f);
  }
  EXPECT_NEAR(exposure, 1.3 + 0.4 + 2.0, 1e-12);
  EXPECT_TRUE(fs::exists(path("ped.manifest.json")));
}

TEST_F(Cli, TransformWarnsAboutAdministrativeCensoring) {
  write("data.csv", "id,exit,cause\na,1,1\nb,2,1\nc,3,1\nd,5,0\n");
  ASSERT_EQ(run("transform " + path("data.csv") + " --cuts event_times --out " + path("ped.csv")), 0);
  EXPECT_EQ(read_json("ped.manifest.json")["warnings"]["admin_censored"], 1);
  EXPECT_NE(read("stderr.txt").find("1 record"), std::string::npos);
}

TEST_F(Cli, HeaderOnlyInputIsExitTwo) {
  write("data.csv", "id,exit,cause\n");
  EXPECT_EQ(run("transform " + path("data.csv") + " --out " + path("ped.csv")), 2);
  EXPECT_NE(read("stderr.txt").find("no records"), std::string::npos);
}

TEST_F(Cli, UsageErrorsAreExitTwo) {
  EXPECT_EQ(run("fit " + path("missing.csv") + " --out " + path("m.json")), 2);  // no --config
  EXPECT_EQ(run("frobnicate"), 2);
  write("data.csv", "id,exit,cause\na,1,1\n");
  EXPECT_EQ(run("fit " + path("data.csv") + " --config " + path("none.json") + " --out " + path("m.json")), 2);
}

TEST_F(Cli, NoEventsIsExitThree) {
  write("data.csv", "id,exit,cause,x\na,1,0,1\nb,2,0,2\nc,3,0,3\n");
  write("model.json", R"({"terms": [{"kind": "intercept"}]})");
  EXPECT_EQ(run("fit " + path("data.csv") + " --config " + path("model.json") + " --out " + path("m.json")), 3);
}

TEST_F(Cli, FitIsReproducibleAndRecordsProvenance) {
  simulate("train.csv", 300, 3);
  small_configs();
  const std::string base = "fit " + path("train.csv") + " --config " + path("model.json") + " --train-config " +
                           path("train.json") + " --seed 4 --out ";
  ASSERT_EQ(run(base + path("a.json")), 0) << read("stderr.txt");
  ASSERT_EQ(run(base + path("b.json")), 0) << read("stderr.txt");
  EXPECT_EQ(read("a.json"), read("b.json"));
  const json mf = read_json("a.manifest.json");
  EXPECT_EQ(mf["seed"], 4);
  EXPECT_EQ(mf["command"], "fit");
  EXPECT_TRUE(fs::exists(path("a.report.json")));
  EXPECT_TRUE(fs::exists(path("a.epochs.csv")));
  EXPECT_TRUE(read_json("a.json").contains("deep"));

  ASSERT_EQ(run(base + path("p.json") + " --pamm-only"), 0) << read("stderr.txt");
  const json pm = read_json("p.manifest.json");
  EXPECT_EQ(pm["data_hash"], mf["data_hash"]);
  EXPECT_NE(pm["config_hash"], mf["config_hash"]);
  EXPECT_FALSE(read_json("p.json").contains("deep"));
}

TEST_F(Cli, FitAcceptsPedInput) {
  simulate("train.csv", 200, 5);
  small_configs();
  ASSERT_EQ(run("transform " + path("train.csv") + " --config " + path("model.json") + " --causes 2 --out " +
                path("ped.csv")),
            0)
      << read("stderr.txt");
  ASSERT_EQ(run("fit " + path("ped.csv") + " --config " + path("model.json") + " --train-config " +
                path("train.json") + " --pamm-only --out " + path("m.json")),
            0)
      << read("stderr.txt");
  EXPECT_EQ(read_json("m.json")["n_causes"], 2);
}

TEST_F(Cli, PredictAndEvaluate) {
  simulate("train.csv", 300, 6);
  simulate("test.csv", 200, 7);
  small_configs();
  ASSERT_EQ(run("fit " + path("train.csv") + " --config " + path("model.json") + " --train-config " +
                path("train.json") + " --out " + path("m.json")),
            0)
      << read("stderr.txt");
  ASSERT_EQ(run("predict " + path("m.json") + " " + path("test.csv") + " --grid 0,1,2.5 --effects " +
                path("fx") + " --out " + path("curves.csv")),
            0)
      << read("stderr.txt");
  std::istringstream curves(read("curves.csv"));
  std::string line;
  std::getline(curves, line);
  EXPECT_EQ(line, "id,t,S,cif_1,cif_2");
  std::getline(curves, line);
  EXPECT_EQ(line, "1,0,1,0,0");
  EXPECT_TRUE(fs::exists(path("fx")));

  ASSERT_EQ(run("evaluate " + path("m.json") + " " + path("test.csv") + " --cause 1 --out " + path("e.json")), 0)
      << read("stderr.txt");
  ASSERT_EQ(run("evaluate " + path("test.csv") + " --km --reference " + path("train.csv") + " --cause 1 --out " +
                path("k.json")),
            0)
      << read("stderr.txt");
  const json e = read_json("e.json"), k = read_json("k.json");
  EXPECT_EQ(e["quartile_times"], k["quartile_times"]);
  for (const char* q : {"q25", "q50", "q75"}) {
    EXPECT_GT(e[q].get<double>(), 0.0);
    EXPECT_LT(e[q].get<double>(), 0.5);
  }
  EXPECT_TRUE(fs::exists(path("e.brier.csv")));
}

TEST_F(Cli, EvaluateRejectsEmptyTestSet) {
  write("test.csv", "id,exit,cause\n");
  EXPECT_EQ(run("evaluate " + path("test.csv") + " --km --out " + path("e.json")), 2);
}

TEST_F(Cli, BenchmarkIsByteIdenticalAcrossRuns) {
  write("bench.json", R"({"max_epochs": 10, "patience": 3, "learning_rate": 0.003,
    "grid": {"psi_scale": [1, 10]}})");
  const std::string args = "benchmark --scenario cr_v1 --reps 2 --n-train 150 --n-test 150 --intervals 6 --seed 9 "
                           "--config " + path("bench.json") + " --out ";
  ASSERT_EQ(run(args + path("r1")), 0) << read("stderr.txt");
  ASSERT_EQ(run(args + path("r2") + " --threads 2"), 0) << read("stderr.txt");
  EXPECT_EQ(read("r1/summary.csv"), read("r2/summary.csv"));
  EXPECT_EQ(read("r1/replicates.csv"), read("r2/replicates.csv"));
  std::istringstream s(read("r1/summary.csv"));
  std::string line;
  std::getline(s, line);
  EXPECT_EQ(line, "quartile,KM,PAMM,DeepPAMM,Optimal");
}

TEST_F(Cli, BenchmarkSingleReplicateReportsZeroSpread) {
  write("bench.json", R"({"max_epochs": 5, "patience": 2})");
  ASSERT_EQ(run("benchmark --reps 1 --n-train 120 --n-test 120 --intervals 5 --pamm-only --config " +
                path("bench.json") + " --out " + path("r")),
            0)
      << read("stderr.txt");
  const std::string summary = read("r/summary.csv");
  EXPECT_NE(summary.find("(0.0)"), std::string::npos);
  EXPECT_EQ(summary.substr(0, summary.find('\n')), "quartile,KM,PAMM,Optimal");
}
