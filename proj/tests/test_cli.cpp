#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "mchmm/mchmm.hpp"

namespace fs = std::filesystem;
using namespace mchmm;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mchmm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_json(const std::string& name, const json& j) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  int run(const std::string& args) const {
    const std::string cmd = std::string(MCHMM_CLI) + " " + args + " > " + (dir_ / "stdout.txt").string() + " 2> " +
                            (dir_ / "stderr.txt").string();
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  std::string stderr_text() const { return read_file(dir_ / "stderr.txt"); }

  fs::path simulate_small(const std::string& name, int per_cluster = 20) const {
    const json cfg = {{"command", "simulate"},
                      {"seed", 3},
                      {"paths", {{"output", (dir_ / name).string()}}},
                      {"simulate", {{"preset", "ss2"}, {"per_cluster", per_cluster}}}};
    EXPECT_EQ(run("simulate --config " + write_json(name + ".json", cfg).string()), 0) << stderr_text();
    return dir_ / name;
  }

  fs::path dir_;
};

std::string slurp(const fs::path& p) { return read_file(p); }

}  // namespace

TEST_F(Cli, UnknownKeyIsRejected) {
  const json cfg = {{"command", "simulate"}, {"simulate", {{"preset", "ss2"}, {"per_clustr", 5}}}};
  EXPECT_EQ(run("simulate --config " + write_json("bad.json", cfg).string()), 2);
  EXPECT_NE(stderr_text().find("per_clustr"), std::string::npos);
  EXPECT_THROW(parse_config(json{{"comand", "fit"}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"model", {{"sampler", "gibbs"}}}}), ConfigError);
}

TEST_F(Cli, BadFlagsAndCommandMismatch) {
  EXPECT_EQ(run("simulate --preset ss9"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  const json cfg = {{"command", "fit"}};
  EXPECT_EQ(run("simulate --config " + write_json("fit.json", cfg).string()), 2);
  EXPECT_EQ(run("simulate --config " + (dir_ / "absent.json").string()), 5);
}

TEST(Config, DefaultsAreEchoed) {
  const json echo = config_to_json(parse_config(json{{"command", "fit"}}));
  EXPECT_EQ(echo.at("seed"), 1);
  EXPECT_EQ(echo.at("model").at("components"), 1);
  EXPECT_EQ(echo.at("model").at("sampler"), "fffbs");
  EXPECT_EQ(echo.at("model").at("particles"), 10);
  EXPECT_EQ(echo.at("mcmc").at("iterations"), 20000);
  EXPECT_EQ(echo.at("mcmc").at("warmup"), 10000);
  EXPECT_DOUBLE_EQ(echo.at("model").at("priors").at("global_scale").get<double>(), 0.25);
  // The echo parses back to itself.
  EXPECT_EQ(config_to_json(parse_config(echo)), echo);
}

TEST_F(Cli, SimulateIsDeterministicAndReplayable) {
  const fs::path a = simulate_small("a");
  const fs::path b = simulate_small("b");
  for (const char* f : {"panel.csv", "latent.csv", "labels.csv", "spec.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  EXPECT_EQ(run("simulate --config " + (a / "manifest.json").string() + " --output " + (dir_ / "c").string()), 0)
      << stderr_text();
  EXPECT_EQ(slurp(a / "panel.csv"), slurp(dir_ / "c" / "panel.csv"));

  const json m = json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(m.at("manifest_version"), 1);
  EXPECT_EQ(m.at("dims").at("n_chains"), 3);
  EXPECT_EQ(m.at("dims").at("n_steps"), 7);
  EXPECT_EQ(m.at("dims").at("n_individuals"), 40);

  const ObservationPanel panel = read_panel(a / "panel.csv", 2, 2);
  for (int n = 0; n < 40; ++n)
    for (int c = 0; c < 3; ++c)
      for (int t = 0; t < 7; ++t) EXPECT_NE(panel.at(n, c, t), kMissing);
}

TEST_F(Cli, FitSmokeAndCapabilityRules) {
  const fs::path sim = simulate_small("sim", 10);
  json cfg = {{"command", "fit"},
              {"threads", 1},
              {"paths", {{"panel", (sim / "panel.csv").string()}, {"output", (dir_ / "fit").string()}}},
              {"model", {{"sampler", "ffbs"}}},
              {"mcmc", {{"iterations", 30}, {"warmup", 10}}}};
  ASSERT_EQ(run("fit --config " + write_json("fit.json", cfg).string()), 0) << stderr_text();
  const std::string acc = slurp(dir_ / "fit" / "acceptance.csv");
  EXPECT_EQ(std::count(acc.begin(), acc.end(), '\n'), 4);
  for (const char* f : {"samples.csv", "summary.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(dir_ / "fit" / f)) << f;

  cfg["model"] = {{"components", 2}, {"sampler", "iffbs"}};
  EXPECT_EQ(run("fit --config " + write_json("iffbs.json", cfg).string()), 3);
  EXPECT_NE(stderr_text().find("iffbs"), std::string::npos);

  cfg["model"] = {{"sampler", "ffbs"}, {"joint_cap", 4}};
  EXPECT_EQ(run("fit --config " + write_json("cap.json", cfg).string()), 3);

  cfg["model"] = {{"n_chains", 4}};
  EXPECT_EQ(run("fit --config " + write_json("chains.json", cfg).string()), 2);
}

TEST_F(Cli, EvaluateGuards) {
  const fs::path sim = simulate_small("sim", 10);
  json cfg = {{"command", "evaluate"},
              {"paths",
               {{"truth_labels", (sim / "labels.csv").string()},
                {"labels", (sim / "labels.csv").string()},
                {"output", (dir_ / "eval").string()}}},
              {"eval", {{"metrics", {"accuracy"}}}}};
  ASSERT_EQ(run("evaluate --config " + write_json("acc.json", cfg).string()), 0) << stderr_text();
  const json report = json::parse(slurp(dir_ / "eval" / "report.json"));
  EXPECT_DOUBLE_EQ(report.at("accuracy").get<double>(), 1.0);

  cfg["paths"]["truth_labels"] = (dir_ / "nope.csv").string();
  EXPECT_NE(run("evaluate --config " + write_json("missing.json", cfg).string()), 0);
  cfg["paths"].erase("truth_labels");
  EXPECT_EQ(run("evaluate --config " + write_json("none.json", cfg).string()), 2);

  // A fit with no post-warm-up draws is an empty store.
  json fit = {{"command", "fit"},
              {"threads", 1},
              {"paths", {{"panel", (sim / "panel.csv").string()}, {"output", (dir_ / "fit0").string()}}},
              {"mcmc", {{"iterations", 5}, {"warmup", 5}}}};
  ASSERT_EQ(run("fit --config " + write_json("fit0.json", fit).string()), 0) << stderr_text();
  json ev = {{"command", "evaluate"},
             {"paths",
              {{"store", (dir_ / "fit0" / "samples.csv").string()},
               {"panel", (sim / "panel.csv").string()},
               {"output", (dir_ / "eval0").string()}}},
             {"eval", {{"metrics", {"predictive"}}}}};
  EXPECT_EQ(run("evaluate --config " + write_json("empty.json", ev).string()), 2);
  EXPECT_FALSE(fs::exists(dir_ / "eval0" / "report.json"));
}

TEST_F(Cli, FitReplayIsByteIdenticalAcrossThreads) {
  const fs::path sim = simulate_small("sim", 10);
  const json cfg = {{"command", "fit"},
                    {"seed", 9},
                    {"paths", {{"panel", (sim / "panel.csv").string()}, {"output", (dir_ / "f1").string()}}},
                    {"model", {{"components", 2}, {"sampler", "pf"}, {"particles", 8}}},
                    {"mcmc", {{"iterations", 12}, {"warmup", 6}}}};
  const std::string path = write_json("fit.json", cfg).string();
  ASSERT_EQ(run("fit --config " + path + " --threads 1"), 0) << stderr_text();
  ASSERT_EQ(run("fit --config " + path + " --threads 3 --output " + (dir_ / "f2").string()), 0) << stderr_text();
  ASSERT_EQ(run("fit --config " + (dir_ / "f1" / "manifest.json").string() + " --output " + (dir_ / "f3").string()), 0)
      << stderr_text();
  for (const char* f : {"samples.csv", "summary.csv", "acceptance.csv", "labels.csv", "ess_trace.csv"}) {
    EXPECT_EQ(slurp(dir_ / "f1" / f), slurp(dir_ / "f2" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "f1" / f), slurp(dir_ / "f3" / f)) << f;
  }
}

TEST_F(Cli, UnwritableOutputIsIoError) {
  std::ofstream(dir_ / "file") << "x";
  const json cfg = {{"command", "simulate"},
                    {"paths", {{"output", (dir_ / "file" / "sub").string()}}},
                    {"simulate", {{"preset", "ss2"}, {"per_cluster", 2}}}};
  EXPECT_EQ(run("simulate --config " + write_json("io.json", cfg).string()), 5);
  EXPECT_NE(stderr_text().find("file"), std::string::npos);
}

TEST_F(Cli, BenchmarkSingleCase) {
  const json cfg = {{"command", "benchmark"},
                    {"paths", {{"output", (dir_ / "bench").string()}}},
                    {"bench", {{"cells", {{{"K", 2}, {"C", 4}}}}, {"T", 4}, {"J", 2}, {"N", 3}, {"repetitions", 1}}}};
  ASSERT_EQ(run("benchmark --config " + write_json("bench.json", cfg).string()), 0) << stderr_text();
  const std::string csv = slurp(dir_ / "bench" / "bench.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_TRUE(fs::exists(dir_ / "bench" / "table.txt"));
}
