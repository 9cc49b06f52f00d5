#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dat/io.hpp"
#include "dat/scenario.hpp"

namespace fs = std::filesystem;
using namespace dat;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(DATOT_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("datot_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string emit61() {
    const auto file = path("s61.json");
    EXPECT_EQ(run("scenario scenario_61 --emit " + file), 0);
    return file;
  }

  std::string write_spec(const std::string& name, const std::string& text) {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  fs::path dir_;
};

const char* kTiny = R"({
  "name": "tiny", "grid": {"t_f": 1, "n_t": 6}, "nodes": ["a", "b", "c"],
  "edges": [["a", "b", 1], ["b", "c", 1]],
  "sources": [{"node": "a", "marginal": %SRC%}],
  "sinks": [{"node": "c", "marginal": %SNK%}],
  "paths": [["a", "b", "c"]], "solver": {"epsilon": 0.5, "tol": 1e-9, "max_iter": 5000}
})";

std::string tiny(const std::string& src, const std::string& snk) {
  std::string t = kTiny;
  t.replace(t.find("%SRC%"), 5, src);
  t.replace(t.find("%SNK%"), 5, snk);
  return t;
}

}  // namespace

TEST_F(Cli, ScenarioEmitsLoadableJson) {
  const auto file = emit61();
  const auto s = load_scenario(file);
  EXPECT_EQ(s.name, "scenario_61");
  EXPECT_EQ(run("scenario 99"), 2);
}

TEST_F(Cli, SolveWritesMarginalsTraceAndSummary) {
  const auto file = emit61();
  const auto out = path("run");
  ASSERT_EQ(run("solve " + file + " --output " + out), 0);
  for (const auto& f : {"v0.csv", "v1.csv", "vT.csv", "trace.csv", "summary.json"}) {
    EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
  }
  const auto summary = json::parse(slurp(fs::path(out) / "summary.json"));
  EXPECT_TRUE(summary["converged"].get<bool>());
  const double tol = summary["config"]["tol"].get<double>();
  const auto& fin = summary["final"];
  EXPECT_LE(fin["E0"].get<double>() + fin["ET"].get<double>() + fin["V"].get<double>(), tol);
  const auto trace = io::read_csv((fs::path(out) / "trace.csv").string());
  EXPECT_EQ(trace.front(), (std::vector<std::string>{"iter", "E0", "ET", "V", "objective"}));
  EXPECT_EQ(trace.size() - 1, summary["iterations"].get<std::size_t>());
  const auto v1 = io::read_csv((fs::path(out) / "v1.csv").string());
  ASSERT_EQ(v1.size(), 101u);
  EXPECT_EQ(v1.front(), (std::vector<std::string>{"bin_center", "mass", "cap"}));
  for (std::size_t r = 1; r < v1.size(); ++r) EXPECT_LE(io::parse_number(v1[r][1]), 0.02 + 1e-8);
}

TEST_F(Cli, StarvedSolveIsNotConverged) {
  const auto file = emit61();
  const auto out = path("run");
  EXPECT_EQ(run("solve " + file + " --max-iter 1 --output " + out), 3);
  const auto summary = json::parse(slurp(fs::path(out) / "summary.json"));
  EXPECT_FALSE(summary["converged"].get<bool>());
  EXPECT_EQ(summary["iterations"].get<int>(), 1);
}

TEST_F(Cli, MissingOrMalformedInput) {
  EXPECT_EQ(run("solve " + path("missing.json")), 2);
  EXPECT_EQ(run("solve " + write_spec("bad.json", "{ not json")), 2);
  EXPECT_EQ(run("plotdata " + path("nowhere")), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("solve " + path("x.json") + " --sweep sideways"), 2);
}

TEST_F(Cli, UnreachableMassExitCode) {
  const auto file = write_spec("unreach.json", tiny("[0, 0, 0, 0, 0, 1]", "[0, 0, 0, 0, 0, 1]"));
  EXPECT_EQ(run("solve " + file + " --output " + path("run")), 4);
}

TEST_F(Cli, FeasibilityVerdicts) {
  EXPECT_EQ(run("feasibility " + emit61()), 0);
  const auto ok = write_spec("ok.json", tiny("[0.5, 0.5, 0, 0, 0, 0]", "[0, 0, 0, 0, 0.5, 0.5]"));
  EXPECT_EQ(run("feasibility " + ok), 0);
  EXPECT_EQ(run("feasibility " + ok + " --delta 0.5"), 0);
  EXPECT_EQ(run("feasibility " + ok + " --delta 0.75"), 2);
  const auto bad = write_spec("bad.json", tiny("[0, 0, 0.5, 0.5, 0, 0]", "[0, 0, 0.5, 0, 0, 0.5]"));
  EXPECT_EQ(run("feasibility " + bad), 2);
}

TEST_F(Cli, PlotdataJoinsNodes) {
  const auto file = emit61();
  const auto out = path("run");
  ASSERT_EQ(run("solve " + file + " --output " + out), 0);
  const auto csv = path("plot.csv");
  ASSERT_EQ(run("plotdata " + out + " --output " + csv), 0);
  const auto rows = io::read_csv(csv);
  EXPECT_EQ(rows.front(), (std::vector<std::string>{"node", "bin_center", "mass", "cap", "role"}));
  ASSERT_EQ(rows.size() - 1, 300u);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r][0] == "v1") {
      EXPECT_EQ(rows[r][4], "interior");
      EXPECT_NEAR(io::parse_number(rows[r][3]), 0.02, 1e-15);
    } else {
      EXPECT_EQ(rows[r][3], "inf");
      EXPECT_EQ(rows[r][4], rows[r][0] == "v0" ? "source" : "sink");
    }
  }
}

TEST_F(Cli, OutputsAreByteIdenticalAcrossRuns) {
  const auto file = emit61();
  ASSERT_EQ(run("solve " + file + " --output " + path("a")), 0);
  ASSERT_EQ(run("solve " + file + " --output " + path("b")), 0);
  for (const auto& f : {"v0.csv", "v1.csv", "vT.csv", "trace.csv"}) {
    EXPECT_EQ(slurp(fs::path(path("a")) / f), slurp(fs::path(path("b")) / f)) << f;
  }
  auto a = json::parse(slurp(fs::path(path("a")) / "summary.json"));
  auto b = json::parse(slurp(fs::path(path("b")) / "summary.json"));
  a.erase("wall_seconds");
  b.erase("wall_seconds");
  EXPECT_EQ(a.dump(), b.dump());
}

TEST_F(Cli, ExtractPlanWritesCells) {
  const auto file = write_spec("tiny.json", tiny("[0.5, 0.5, 0, 0, 0, 0]", "[0, 0, 0, 0, 0.5, 0.5]"));
  const auto csv = path("plan.csv");
  ASSERT_EQ(run("extract-plan " + file + " --top-k 4 --output " + csv), 0);
  const auto rows = io::read_csv(csv);
  EXPECT_EQ(rows.front(), (std::vector<std::string>{"t0", "t1", "tT", "mass"}));
  EXPECT_EQ(rows.size(), 5u);
  EXPECT_EQ(run("extract-plan " + file + " --path 3"), 2);
}

TEST_F(Cli, HiddenDebugCommands) {
  const auto kernel = path("k.csv");
  ASSERT_EQ(run("inspect-kernel --n-t 4 --weight 1 --eps 1 --output " + kernel), 0);
  const auto rows = io::read_csv(kernel);
  EXPECT_EQ(rows.size(), 17u);
  EXPECT_EQ(rows[1][2], "0");
  const auto file = write_spec("tiny.json", tiny("[0.5, 0.5, 0, 0, 0, 0]", "[0, 0, 0, 0, 0.5, 0.5]"));
  const auto dense = path("dense.csv");
  ASSERT_EQ(run("oracle " + file + " --sweeps 50 --output " + dense), 0);
  EXPECT_EQ(io::read_csv(dense).size(), 19u);
}
