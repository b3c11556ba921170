#include "bhom/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace bhom;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bhom_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

RunConfig load(const std::string& name) { return parse_config(slurp(fs::path(BHOM_CONFIG_DIR) / name)); }

int run(const std::string& sub, const RunConfig& cfg, const fs::path& out) {
  std::ostringstream log;
  cli::Options opt;
  opt.out_dir = out;
  opt.log = &log;
  return cli::dispatch(sub, cfg, opt);
}

int shell(const std::string& args) {
  const int rc = std::system((std::string(BHOM_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}
}  // namespace

TEST(Dispatch, TrivialConvergenceExitsZero) {
  const fs::path out = scratch("converge");
  EXPECT_EQ(run("converge", load("converge_trivial.json"), out), 0);
  const auto j = nlohmann::json::parse(slurp(out / "converge.json"));
  EXPECT_TRUE(j["all_pass"].get<bool>());
  for (const auto& row : j["rows"]) EXPECT_LE(row["l2_domain"].get<double>(), 1e-12);
  EXPECT_TRUE(fs::exists(out / "converge.csv"));
}

TEST(Dispatch, UnmatchedSeriesExitsNonzeroWithErrorEntry) {
  RunConfig cfg = load("lemmas_unmatched.json");
  cfg.eps = {0.25, 0.125};
  cfg.quad = QuadratureOptions{8, 8, 16};
  const fs::path out = scratch("unmatched");
  EXPECT_NE(run("check-lemmas", cfg, out), 0);
  const auto j = nlohmann::json::parse(slurp(out / "lemmas.json"));
  bool found = false;
  for (const auto& e : j)
    if (e["name"] == "outer_flux_identity") found = e.contains("error") && !e["pass"].get<bool>();
  EXPECT_TRUE(found);
}

TEST(Dispatch, CorrectorScanWritesOneRowPerEps) {
  const fs::path out = scratch("scan");
  EXPECT_EQ(run("corrector-scan", load("corrector_scan.json"), out), 0);
  std::istringstream csv(slurp(out / "corrector_scan.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_NE(line.find("epsilon,omega_l2_total,omega_h1_total,omega_grad_l1_total,q_grad_l2_total,mu_pairing"),
            std::string::npos);
  EXPECT_NE(line.find("slope_omega_l2_total"), std::string::npos);
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(Dispatch, LayoutDumpColumns) {
  const fs::path out = scratch("layout");
  EXPECT_EQ(run("dump-layout", load("corrector_scan.json"), out), 0);
  const std::string first = slurp(out / "layout_0.csv");
  EXPECT_EQ(first.substr(0, first.find('\n')), "k,x1,x2,x3,r");
  EXPECT_TRUE(fs::exists(out / "layout_2.csv"));
}

TEST(Dispatch, SolveSubcommandsReportKeys) {
  const fs::path out = scratch("solve");
  EXPECT_EQ(run("solve-hom", load("slab_robin.json"), out), 0);
  const auto hom = nlohmann::json::parse(slurp(out / "solve_hom.json"));
  EXPECT_NEAR(hom["report"]["energy"].get<double>(), 1.0 / 3.0, 1e-9);
  EXPECT_FALSE(fs::exists(out / "u_hom.csv"));  // json only
  EXPECT_EQ(run("solve-eps", load("obstacle_single.json"), out), 0);
  const auto eps = nlohmann::json::parse(slurp(out / "solve_eps.json"));
  ASSERT_EQ(eps.size(), 1u);
  for (const char* k : {"iterations", "residual", "energy", "active_set", "wall_ms", "converged"})
    EXPECT_TRUE(eps[0]["report"].contains(k)) << k;
  const std::string field = slurp(out / "u_eps_0.csv");
  EXPECT_EQ(field.substr(0, field.find('\n')), "node,x1,x2,x3,value");
}

TEST(Dispatch, ArtifactsAreByteIdentical) {
  const RunConfig cfg = load("corrector_scan.json");
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(run("mu-limit", cfg, a), 0);
  ASSERT_EQ(run("mu-limit", cfg, b), 0);
  EXPECT_EQ(slurp(a / "mu_limit.json"), slurp(b / "mu_limit.json"));
  const RunConfig conv = load("converge_trivial.json");
  ASSERT_EQ(run("converge", conv, a), 0);
  ASSERT_EQ(run("converge", conv, b), 0);
  EXPECT_EQ(slurp(a / "converge.json"), slurp(b / "converge.json"));
  EXPECT_EQ(slurp(a / "converge.csv"), slurp(b / "converge.csv"));
}

TEST(Dispatch, PipelineErrorsLeaveAnErrorReport) {
  RunConfig cfg = load("obstacle_single.json");
  cfg.mesh.resolution_override = false;
  cfg.h = 0.25;
  const fs::path out = scratch("error");
  EXPECT_EQ(run("solve-eps", cfg, out), 1);
  const auto j = nlohmann::json::parse(slurp(out / "error.json"));
  EXPECT_EQ(j["subcommand"], "solve-eps");
  EXPECT_TRUE(fs::exists(out / "solve_eps.json"));
}

TEST(Binary, ExitCodes) {
  const std::string cfg = std::string(BHOM_CONFIG_DIR) + "/converge_trivial.json";
  const fs::path out = scratch("binary");
  EXPECT_EQ(shell("converge --config " + cfg + " --out " + out.string()), 0);
  EXPECT_EQ(shell("converge --out " + out.string()), 2);
  EXPECT_EQ(shell("bogus --config " + cfg), 2);
  EXPECT_EQ(shell("converge --config /nonexistent.json"), 2);
  const fs::path bad = scratch("bad.json");
  std::ofstream(bad) << R"({"patches": {"eps": [0.25, 0.5]}})";
  EXPECT_EQ(shell("mu-limit --config " + bad.string()), 2);
}

TEST(Binary, EnvironmentOverridesFlags) {
  const fs::path out = scratch("env");
  const std::string cmd = "BHOM_CONFIG=" + std::string(BHOM_CONFIG_DIR) + "/corrector_scan.json BHOM_OUT=" +
                          out.string() + " " + BHOM_CLI_PATH + " mu-limit > /dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(out / "mu_limit.json"));
}
