#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "contact_flow/cli/config.hpp"
#include "contact_flow/cli/runner.hpp"

namespace fs = std::filesystem;

namespace contact_flow::cli {
namespace {

const char* const kDamped = R"(
[run]
seed = 5
t_span = 0, 10

[system]
spec = damped_oscillator(n=1, m=1, k=1, alpha=0.1)

[initial_state]
S = 0
q = 1
p = 0
)";

const char* const kEnsemble = R"(
[run]
seed = 99

[system]
spec = damped_oscillator(alpha=0.1)

[integrator]
rtol = 1e-8
atol = 1e-10

[measure]
lower = 0, -1, -1
upper = 1, 1, 1
h_window = 0.1, 2

[ensemble]
samples = 20000
t = 0.5
boxes = 2
box_width = 0.4, 0.2, 0.2
)";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("contact_flow_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const std::string& body) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << body;
    return p;
  }

  // Runs the CLI binary; returns its exit status.
  int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + CONTACT_FLOW_CLI + " " + args + " > " + (dir_ / "stdout.txt").string() +
                            " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static nlohmann::json json_at(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

  static std::vector<std::vector<std::string>> csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::string cell;
      std::stringstream ss(line);
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (!line.empty() && line.back() == ',') cells.emplace_back();
      rows.push_back(cells);
    }
    return rows;
  }

  fs::path dir_;
};

TEST_F(Cli, SimulateDampedOscillator) {
  const fs::path cfg = write_config("c.ini", kDamped);
  ASSERT_EQ(run("simulate --quiet --config " + cfg.string() + " --out " + (dir_ / "out").string()), 0);
  const auto rows = csv(dir_ / "out" / "trajectory.csv");
  ASSERT_GT(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"t", "S", "q1", "p1", "h", "xi_h", "logJ", "I"}));
  EXPECT_EQ(rows.back()[0], "10");
  EXPECT_NEAR(std::stod(rows.back()[4]), 0.5 * std::exp(-1.0), 1e-9);
  // Values carry 17 significant digits and round-trip.
  EXPECT_EQ(rows.back()[5], "-0.10000000000000001");

  const auto rep = json_at(dir_ / "out" / "report.json");
  EXPECT_TRUE(rep["pass"].get<bool>());
  EXPECT_EQ(rep["seed"].get<int>(), 5);
  EXPECT_LE(rep["result"]["invariant_max_rel_dev"].get<double>(), 1e-6);
  EXPECT_LE(rep["result"]["closed_form_max_error"].get<double>(), 1e-8);
  EXPECT_EQ(rep["config"]["initial_state"]["q"], "1");
}

TEST_F(Cli, ConservativeLogJIsZero) {
  const fs::path cfg = write_config("c.ini", R"(
[run]
t_span = 0, 20
[system]
spec = harmonic(n=2)
[initial_state]
S = 0
q = 1, 0
p = 0, 0.5
)");
  ASSERT_EQ(run("simulate --quiet --config " + cfg.string() + " --out " + dir_.string()), 0);
  const auto rows = csv(dir_ / "trajectory.csv");
  for (std::size_t k = 1; k < rows.size(); ++k) EXPECT_LE(std::abs(std::stod(rows[k][7])), 1e-9);
}

TEST_F(Cli, ValidationErrorWritesNothing) {
  std::string bad = kDamped;
  bad.replace(bad.find("q = 1"), 5, "q = 1, 2");
  bad.replace(bad.find("p = 0"), 5, "p = 0, 0");
  const fs::path cfg = write_config("c.ini", bad);
  const fs::path out = dir_ / "out";
  EXPECT_EQ(run("simulate --config " + cfg.string() + " --out " + out.string()), 1);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("n=1"), std::string::npos);
}

TEST_F(Cli, ConfigErrorsExitOne) {
  const std::vector<std::string> bodies = {
      std::string(kDamped) + "\n[nonsense]\nx = 1\n",
      std::string(kDamped) + "\n[integrator]\nrtoll = 1\n",
      std::string(kDamped) + "\n[integrator]\nrtol = abc\n",
      std::string(kDamped) + "\n[integrator]\nmethod = euler\n",
      std::string(kDamped) + "\n[integrator]\nrtol = -1\n",
      "[system]\nexpression = p1^2 + q3\nn = 1\n[run]\nt_span = 0, 1\n[initial_state]\nS=0\nq=0\np=0\n",
      "[system]\nspec = pendulum\n[run]\nt_span = 0, 1\n[initial_state]\nS=0\nq=0\np=0\n",
      "[system]\nspec = harmonic\n[initial_state]\nS=0\nq=0\np=0\n",  // simulate needs t_span
      "[system]\nspec = harmonic\n[run]\nt_span = 1, 0\n[initial_state]\nS=0\nq=0\np=0\n",
      "[system]\nspec = harmonic\n[run]\nt_span = 0, 1\nseed = -3\n[initial_state]\nS=0\nq=0\np=0\n",
      "[system]\nspec = harmonic\n[run]\nt_span = 0, 1\n[initial_state]\nS=0\nq=0\np=0\n[output]\nreport=../x.json\n",
  };
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    const fs::path cfg = write_config("c" + std::to_string(i) + ".ini", bodies[i]);
    const fs::path out = dir_ / ("out" + std::to_string(i));
    EXPECT_EQ(run("simulate --config " + cfg.string() + " --out " + out.string()), 1) << bodies[i];
    EXPECT_FALSE(fs::exists(out)) << i;
  }
  EXPECT_EQ(run("simulate --config " + (dir_ / "missing.ini").string()), 1);
  EXPECT_EQ(run("simulate"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("simulate --config " + write_config("ok.ini", kDamped).string() + " --out " + dir_.string(),
                "CONTACT_FLOW_THREADS=lots"),
            1);
}

TEST_F(Cli, ModeMismatchIsAConfigError) {
  std::string body = kDamped;
  body.replace(body.find("seed = 5"), 8, "seed = 5\nmode = verify");
  EXPECT_EQ(run("simulate --config " + write_config("m.ini", body).string() + " --out " + dir_.string()), 1);
  EXPECT_EQ(run("verify --quiet --config " + write_config("m.ini", body).string() + " --out " + dir_.string()), 0);
}

TEST_F(Cli, IntegrationFailureWritesPartialOutput) {
  // Ṡ = S^2 from S = 1 blows up at t = 1.
  const fs::path cfg = write_config("c.ini", R"(
[run]
t_span = 0, 2
[system]
expression = S^2
n = 1
[initial_state]
S = 1
q = 0
p = 0
)");
  EXPECT_EQ(run("simulate --quiet --config " + cfg.string() + " --out " + dir_.string()), 2);
  const auto rows = csv(dir_ / "trajectory.csv");
  ASSERT_GT(rows.size(), 2u);
  EXPECT_LT(std::stod(rows.back()[0]), 1.0);
  const auto rep = json_at(dir_ / "report.json");
  EXPECT_FALSE(rep["pass"].get<bool>());
  EXPECT_TRUE(rep.contains("error"));
}

TEST_F(Cli, UnwritableOutputIsARuntimeError) {
  const fs::path cfg = write_config("c.ini", kDamped);
  const fs::path blocker = dir_ / "file";
  std::ofstream(blocker) << "x";
  EXPECT_EQ(run("simulate --quiet --config " + cfg.string() + " --out " + (blocker / "sub").string()), 2);
}

TEST_F(Cli, ZeroLevelOrbitLeavesInvariantColumnEmpty) {
  std::string body = kDamped;
  body.replace(body.find("S = 0"), 5, "S = 5");
  ASSERT_EQ(run("simulate --quiet --config " + write_config("c.ini", body).string() + " --out " + dir_.string()), 0);
  const auto rows = csv(dir_ / "trajectory.csv");
  ASSERT_EQ(rows[1].size(), 8u);
  EXPECT_EQ(rows[1][4], "0");
  EXPECT_EQ(rows[1][7], "");
  // Later rows drift off h = 0 only by integration error.
  for (std::size_t k = 1; k < rows.size(); ++k) EXPECT_LE(std::abs(std::stod(rows[k][4])), 1e-8);
}

TEST_F(Cli, VerifyDampedOscillator) {
  const fs::path cfg = write_config("c.ini", kDamped);
  ASSERT_EQ(run("verify --quiet --config " + cfg.string() + " --out " + dir_.string()), 0);
  const auto rep = json_at(dir_ / "report.json");
  EXPECT_TRUE(rep["pass"].get<bool>());
  bool saw_invariant = false;
  for (const auto& c : rep["checks"]) {
    EXPECT_TRUE(c["pass"].get<bool>()) << c.dump();
    if (c["name"] == "pointwise_invariant") {
      saw_invariant = true;
      EXPECT_LE(c["measured"].get<double>(), 1e-6);
    }
  }
  EXPECT_TRUE(saw_invariant);
}

TEST_F(Cli, VerifyCorruptedExponentFailsUniqueness) {
  const fs::path cfg = write_config("c.ini", std::string(kDamped) + "\n[verify]\ncorrupt_exponent = 1\n");
  EXPECT_EQ(run("verify --quiet --config " + cfg.string() + " --out " + dir_.string()), 3);
  const auto rep = json_at(dir_ / "report.json");
  EXPECT_FALSE(rep["pass"].get<bool>());
  for (const auto& c : rep["checks"]) {
    EXPECT_EQ(c["pass"].get<bool>(), c["name"] != "uniqueness") << c.dump();
  }
}

TEST_F(Cli, VerifyConservativeEnergy) {
  const fs::path cfg = write_config("c.ini", R"(
[run]
t_span = 0, 20
[system]
spec = harmonic(n=1)
[initial_state]
S = 0
q = 1
p = 0
)");
  ASSERT_EQ(run("verify --quiet --config " + cfg.string() + " --out " + dir_.string()), 0);
  const auto rep = json_at(dir_ / "report.json");
  for (const auto& c : rep["checks"]) {
    if (c["name"] == "energy_conservation") EXPECT_LE(c["measured"].get<double>(), 1e-9);
    if (c["name"] == "hamilton_equations") EXPECT_EQ(c["measured"].get<double>(), 0.0);
  }
}

TEST_F(Cli, EnsembleAtTimeZeroIsTrivial) {
  std::string body = kEnsemble;
  body.replace(body.find("t = 0.5"), 7, "t = 0");
  body.replace(body.find("samples = 20000"), 15, "samples = 40000");
  ASSERT_EQ(run("ensemble --quiet --config " + write_config("c.ini", body).string() + " --out " + dir_.string()), 0);
  const auto rep = json_at(dir_ / "report.json");
  for (const auto& b : rep["result"]["boxes"]) {
    EXPECT_EQ(b["direct_count"], b["pushed_count"]);
    EXPECT_EQ(b["z_score"].get<double>(), 0.0);
  }
  const auto rows = csv(dir_ / "samples.csv");
  EXPECT_EQ(rows[0], (std::vector<std::string>{"S", "q1", "p1", "h", "weight"}));
  EXPECT_EQ(rows.size(), 40001u);
}

TEST_F(Cli, EnsembleIsByteIdenticalAcrossRunsAndThreadCounts) {
  const fs::path cfg = write_config("c.ini", kEnsemble);
  ASSERT_EQ(run("ensemble --quiet --config " + cfg.string() + " --out " + (dir_ / "a").string(),
                "CONTACT_FLOW_THREADS=1"),
            0);
  ASSERT_EQ(run("ensemble --quiet --config " + cfg.string() + " --out " + (dir_ / "b").string(),
                "CONTACT_FLOW_THREADS=3"),
            0);
  EXPECT_EQ(slurp(dir_ / "a" / "samples.csv"), slurp(dir_ / "b" / "samples.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "report.json"), slurp(dir_ / "b" / "report.json"));
  ASSERT_EQ(run("ensemble --quiet --seed 100 --config " + cfg.string() + " --out " + (dir_ / "c").string()), 0);
  EXPECT_NE(slurp(dir_ / "a" / "samples.csv"), slurp(dir_ / "c" / "samples.csv"));
  EXPECT_EQ(json_at(dir_ / "c" / "report.json")["seed"].get<std::uint64_t>(), 100u);
}

TEST_F(Cli, SampleWritesEnsembleAndPartitionFunction) {
  std::string body = kEnsemble;
  body.replace(body.find("h_window = 0.1, 2"), 17, "h_window = 0.1, 2\ngrid = 16");
  ASSERT_EQ(run("sample --quiet --config " + write_config("c.ini", body).string() + " --out " + dir_.string()), 0);
  const auto rep = json_at(dir_ / "report.json");
  EXPECT_GT(rep["result"]["partition_function"]["Z"].get<double>(), 0.0);
  EXPECT_NEAR(rep["result"]["acceptance_rate"].get<double>(), 0.117, 0.01);
  EXPECT_EQ(csv(dir_ / "samples.csv").size(), 20001u);
}

TEST_F(Cli, EnsembleStarvationIsARuntimeError) {
  std::string body = kEnsemble;
  body.replace(body.find("h_window = 0.1, 2"), 17, "h_window = 0.99995, 1");
  EXPECT_EQ(run("ensemble --quiet --config " + write_config("c.ini", body).string() + " --out " + dir_.string()), 2);
  EXPECT_FALSE(json_at(dir_ / "report.json")["pass"].get<bool>());
}

TEST_F(Cli, InfoListsCatalog) {
  ASSERT_EQ(run("info"), 0);
  const auto rep = json_at(dir_ / "stdout.txt");
  std::vector<std::string> names;
  for (const auto& e : rep["catalog"]) names.push_back(e["name"]);
  EXPECT_NE(std::find(names.begin(), names.end(), "damped_oscillator"), names.end());
  ASSERT_EQ(run("info --config " + write_config("c.ini", kDamped).string()), 0);
  const auto sys = json_at(dir_ / "stdout.txt")["system"];
  EXPECT_DOUBLE_EQ(sys["divergence"].get<double>(), -0.2);
  EXPECT_DOUBLE_EQ(sys["h"].get<double>(), 0.5);
}

TEST_F(Cli, SimulateAndVerifyAreDeterministic) {
  const fs::path cfg = write_config("c.ini", kDamped);
  for (const char* mode : {"simulate", "verify"}) {
    ASSERT_LE(run(std::string(mode) + " --quiet --config " + cfg.string() + " --out " + (dir_ / "a").string()), 0);
    ASSERT_LE(run(std::string(mode) + " --quiet --config " + cfg.string() + " --out " + (dir_ / "b").string()), 0);
    for (const auto& entry : fs::directory_iterator(dir_ / "a")) {
      EXPECT_EQ(slurp(entry.path()), slurp(dir_ / "b" / entry.path().filename())) << entry.path();
    }
  }
}

// Library-level config checks that do not need the binary.
TEST(Config, ParsesListsAndDefaults) {
  std::istringstream in(std::string(kDamped) + "\n[integrator]\nsample_times = 2.5, 5\nmethod = rk4\ndt = 0.05\n");
  const RunConfig c = build_config(read_config_text(in), Mode::simulate, 17);
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.integrator.method, Method::rk4);
  EXPECT_EQ(c.integrator.sample_times, (std::vector<double>{2.5, 5.0}));
  ASSERT_TRUE(c.initial_state);
  EXPECT_EQ(c.initial_state->q(0), 1.0);
  EXPECT_EQ(resolve_system(c).system.dof(), 1u);
}

TEST(Config, RejectsDuplicateKeysAndStrayLines) {
  std::istringstream dup("[run]\nseed = 1\nseed = 2\n");
  EXPECT_THROW(read_config_text(dup), ConfigError);
  std::istringstream stray("seed = 1\n");
  EXPECT_THROW(read_config_text(stray), ConfigError);
  std::istringstream comments("# comment\n; other\n[run]\nseed = 3\n");
  EXPECT_EQ(read_config_text(comments)["run"]["seed"], "3");
}

TEST(Config, ReportEchoReproducesRun) {
  std::istringstream in(kDamped);
  const RunConfig c = build_config(read_config_text(in), Mode::simulate);
  const ResolvedSystem sys = resolve_system(c);
  // Turn the echo back into config text and rebuild.
  const Json echo = config_echo(c, sys);
  std::string text;
  for (const auto& [section, body] : echo.items()) {
    text += "[" + section + "]\n";
    for (const auto& [k, v] : body.items()) text += k + " = " + v.get<std::string>() + "\n";
  }
  std::istringstream again(text);
  const RunConfig c2 = build_config(read_config_text(again), Mode::simulate);
  EXPECT_EQ(config_echo(c2, resolve_system(c2)).dump(), echo.dump());
  EXPECT_EQ(c2.integrator.atol, c.integrator.atol);
}

}  // namespace
}  // namespace contact_flow::cli
