#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ruinbound/ruinbound.hpp"

using namespace ruinbound;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(RUINBOUND_CLI) + " " + args + " 2>/dev/null";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string config(const std::string& rel) { return std::string(RUINBOUND_CONFIG_DIR) + "/" + rel; }

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ruinbound_cli_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string write_config(const std::string& name, const std::string& text) {
  const auto p = scratch(name);
  std::ofstream(p) << text;
  return p.string();
}

const char* kQuick = R"({
  "name": "quick",
  "dim": 2,
  "model": {"rho": 0.5},
  "set": {"k": 2, "a": [1.0, 1.0]},
  "u": [1.0],
  "resolution": 64,
  "paths": 2000,
  "seed": 4
})";

}  // namespace

TEST(Cli, BoundText) {
  const CliRun r = run("bound --config " + config("matrix/01_d1_k1_zero.json"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("K              = 2.828427125"), std::string::npos) << r.out;
}

TEST(Cli, BoundJsonl) {
  const CliRun r = run("bound --format jsonl --config " + config("matrix/01_d1_k1_zero.json"));
  ASSERT_EQ(r.code, 0);
  const Json j = Json::parse(r.out);
  EXPECT_NEAR(j["value"].get<double>(), 2.0 * std::sqrt(2.0), 1e-12);
  EXPECT_EQ(j["method"], "closed-form");
  EXPECT_EQ(j["family"], "bm");
}

TEST(Cli, VerifyHoldsAndIsReproducible) {
  const std::string cfg = write_config("quick.json", kQuick);
  const CliRun a = run("verify --format jsonl --jobs 1 --config " + cfg);
  const CliRun b = run("verify --format jsonl --jobs 2 --config " + cfg);
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0);
  const Json ra = Json::parse(a.out), rb = Json::parse(b.out);
  EXPECT_EQ(ra["status"], "holds");
  EXPECT_EQ(without_timing(ra).dump(), without_timing(rb).dump());
}

TEST(Cli, FlagsOverrideConfig) {
  const std::string cfg = write_config("quick.json", kQuick);
  const CliRun r = run("verify --format jsonl --seed 9 --paths 500 --resolution 32 --config " + cfg);
  ASSERT_EQ(r.code, 0);
  const Json row = Json::parse(r.out);
  EXPECT_EQ(row["paths"], 500);
  EXPECT_EQ(row["resolution"], 32);
}

TEST(Cli, JobsFromEnvironment) {
  const std::string cfg = write_config("quick.json", kQuick);
  const CliRun r = run("verify --format csv --config " + cfg);
  setenv("RUINBOUND_JOBS", "2", 1);
  const CliRun e = run("verify --format csv --config " + cfg);
  setenv("RUINBOUND_JOBS", "zero", 1);
  const CliRun bad = run("verify --format csv --config " + cfg);
  unsetenv("RUINBOUND_JOBS");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(e.code, 0);
  EXPECT_EQ(bad.code, 0);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), csv_header(kReportColumns));
}

TEST(Cli, WritesReportFiles) {
  const std::string cfg = write_config("quick.json", kQuick);
  const auto prefix = scratch("reports") / "quick";
  std::filesystem::remove_all(prefix.parent_path());
  const CliRun r = run("verify --format csv --config " + cfg + " --out " + prefix.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(std::filesystem::exists(prefix.string() + ".csv"));
  std::ifstream jsonl(prefix.string() + ".jsonl");
  std::string line;
  ASSERT_TRUE(std::getline(jsonl, line));
  EXPECT_EQ(Json::parse(line)["name"], "quick");
}

TEST(Cli, ViolationExitsOne) {
  const CliRun r = run("verify --format jsonl --config " + config("outside/fbm_h03.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(Json::parse(r.out)["status"], "violated");
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("verify --config /nonexistent/file.json").code, 2);
  EXPECT_EQ(run("verify").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("verify --format xml --config " + config("matrix/01_d1_k1_zero.json")).code, 2);
  const std::string bad = write_config("bad.json", "{\n  \"dim\": 2,\n  \"set\": {\"k\": 3}\n}");
  const CliRun r = run("verify --format jsonl --config " + bad);
  EXPECT_EQ(r.code, 2);
  const Json row = Json::parse(r.out);
  EXPECT_EQ(row["status"], "error");
  EXPECT_NE(row["error"].get<std::string>().find("line 3"), std::string::npos);
}

TEST(Cli, SweepEmptyListPrintsHeader) {
  const CliRun r = run("sweep --param u --values= --config " + config("matrix/01_d1_k1_zero.json"));
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, csv_header(kSweepColumns) + "\n");
}

TEST(Cli, SweepOverCorrelation) {
  const std::string cfg = write_config("quick.json", kQuick);
  const CliRun r = run("sweep --param rho --values -0.5,0,0.5 --paths 500 --format jsonl --config " + cfg);
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream in(r.out);
  std::string line;
  std::vector<double> eps;
  while (std::getline(in, line)) {
    const Json row = Json::parse(line);
    EXPECT_EQ(row["parameter"], "rho");
    eps.push_back(row["epsilon"].get<double>());
  }
  ASSERT_EQ(eps.size(), 3u);
  const double pi = std::numbers::pi;
  EXPECT_NEAR(eps[0], 0.25 + std::asin(-0.5) / (2 * pi), 1e-6);
  EXPECT_NEAR(eps[1], 0.25, 1e-6);
  EXPECT_NEAR(eps[2], 1.0 / 3.0, 1e-6);
  EXPECT_EQ(run("sweep --param gamma --values 1 --config " + cfg).code, 2);
  EXPECT_EQ(run("sweep --param u --values 1,abc --config " + cfg).code, 2);
}

TEST(Cli, SimulateRoundTrip) {
  const std::string cfg = write_config("quick.json", kQuick);
  const auto file = scratch("paths.bin");
  const CliRun r = run("simulate --paths 50 --resolution 16 --config " + cfg + " --out " + file.string());
  ASSERT_EQ(r.code, 0);
  std::ifstream in(file, std::ios::binary);
  const PathEnsemble e = read_ensemble(in);
  EXPECT_EQ(e.n_paths, 50u);
  EXPECT_EQ(e.dim, 2);
  EXPECT_EQ(e.points(), 17u);
  const PathEnsemble ref = simulate_bm(equicorrelated_model(2, 0.5), TimeGrid::uniform(1.0, 16), 50, 4);
  EXPECT_EQ(e.values, ref.values);
  EXPECT_EQ(run("simulate --config " + cfg).code, 2);
}
