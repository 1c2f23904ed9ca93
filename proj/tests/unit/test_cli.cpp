#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>
#include <sys/wait.h>

#include "fixtures.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CCOPF_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json load(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ccopf_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string case_arg(const std::string& name) { return "--case " + fixtures::case_path(name).string(); }

}  // namespace

TEST(Cli, FitWritesOneModelPlusOnePerLine) {
  const auto dir = scratch("fit");
  ASSERT_EQ(run("fit " + case_arg("case3") + " --distribution gmm -K 2 --samples 1500 --restarts 3 -o " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "models/classical/xi.json"));
  int classical = 0, ci = 0;
  for (const auto& e : fs::directory_iterator(dir / "models/classical")) classical += e.path().filename() != "fit_reports.json";
  for (const auto& e : fs::directory_iterator(dir / "models/ci")) ci += e.path().filename() != "fit_reports.json";
  EXPECT_EQ(classical, 1);
  EXPECT_EQ(ci, 1 + 3);
  EXPECT_EQ(load(dir / "models/ci/fit_reports.json").size(), 4u);
  EXPECT_TRUE(fs::exists(dir / "effective_config.json"));
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const auto a = scratch("rep_a"), b = scratch("rep_b");
  const std::string args = "evaluate " + case_arg("case14_wind") + " --distribution gmm -K 2 --samples 1500 --restarts 2 -o ";
  ASSERT_EQ(run(args + a.string()), 0);
  ASSERT_EQ(run(args + b.string()), 0);
  int compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    if (rel == "timings.json" || rel == "effective_config.json") continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 10);
}

TEST(Cli, GaussianApproachesGiveTheSameDispatch) {
  const auto dir = scratch("gauss");
  ASSERT_EQ(run("solve " + case_arg("case14_wind") + " --samples 4000 -o " + dir.string()), 0);
  const auto a = load(dir / "solution_classical.json");
  const auto b = load(dir / "solution_ci.json");
  ASSERT_EQ(a["status"], "optimal");
  ASSERT_EQ(b["status"], "optimal");
  const auto& ga = a["generators"];
  const auto& gb = b["generators"];
  ASSERT_EQ(ga.size(), gb.size());
  for (std::size_t g = 0; g < ga.size(); ++g) {
    EXPECT_NEAR(ga[g]["pbar"].get<double>(), gb[g]["pbar"].get<double>(), 1e-6);
    EXPECT_NEAR(ga[g]["alpha"].get<double>(), gb[g]["alpha"].get<double>(), 1e-6);
  }
}

TEST(Cli, InfeasibleModelExitsWithTwoAndWritesStatus) {
  const auto dir = scratch("infeasible");
  fs::create_directories(dir);
  auto c = nlohmann::json::parse(slurp(fixtures::case_path("case2")));
  c["buses"][1]["load"] = 400.0;
  std::ofstream(dir / "heavy.json") << c.dump();
  EXPECT_EQ(run("solve --case " + (dir / "heavy.json").string() + " --samples 500 -o " + (dir / "out").string()), 2);
  EXPECT_EQ(load(dir / "out/solution_ci.json")["status"], "infeasible");
}

TEST(Cli, InvalidInputsExitWithThree) {
  const auto dir = scratch("invalid");
  EXPECT_EQ(run("solve --case /nonexistent/case.json -o " + dir.string()), 3);
  EXPECT_EQ(run("solve " + case_arg("case3") + " --epsilon 0.7 -o " + dir.string()), 3);
  EXPECT_EQ(run("solve " + case_arg("case3") + " --backend nosuch -o " + dir.string()), 3);
  EXPECT_EQ(run("solve " + case_arg("case3") + " --distribution gaussian -K 3 -o " + dir.string()), 3);
  EXPECT_EQ(run("frobnicate"), 3);
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << "{\"case\": 1, \"unknown_key\": true}";
  EXPECT_EQ(run("solve -c " + (dir / "bad.json").string()), 3);
}

TEST(Cli, ExperimentRowsAndColumnOrder) {
  const auto dir = scratch("experiment");
  ASSERT_EQ(run("experiment " + case_arg("case3") + " --samples 1000 --seeds 1 2 3 -o " + dir.string()), 0);
  std::ifstream in(dir / "experiment.csv");
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("run,seed,loglik_classical,loglik_ci,", 0), 0u) << header;
  int rows = 0;
  std::string last;
  while (std::getline(in, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 4);
  EXPECT_EQ(last.rfind("aggregate,", 0), 0u);
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "runs/seed_2/risk_ci.csv"));
}

TEST(Cli, PwlAndPtdfDumps) {
  const auto dir = scratch("dumps");
  fs::create_directories(dir);
  ASSERT_EQ(run("pwl --delta 0.002 -o " + (dir / "pwl.json").string()), 0);
  EXPECT_EQ(load(dir / "pwl.json")["a"].size(), 10u);
  ASSERT_EQ(run("ptdf " + case_arg("case3") + " -o " + (dir / "h.csv").string()), 0);
  std::ifstream in(dir / "h.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "line,1,2,3");
  EXPECT_EQ(row.substr(0, 4), "1,0,");
}

TEST(Cli, SolverFromEnvironment) {
  const auto dir = scratch("env");
  const std::string cmd = "CCOPF_SOLVER=nosuch " + std::string(CCOPF_CLI) + " solve " + case_arg("case3") +
                          " --samples 500 -o " + dir.string() + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 3);
}
