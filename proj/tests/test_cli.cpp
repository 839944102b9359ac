#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <gtest/gtest.h>

#include "qfb/cli.hpp"
#include "qfb/config.hpp"
#include "qfb/run.hpp"

namespace qfb {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("qfb_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  static std::string read(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "qfb");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return run_cli(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  fs::path dir_;
  std::ostringstream out_;
  std::ostringstream err_;
};

const char* kDecay = R"({
  "model": {"preset": "two_level", "omega": 0, "gamma": 1},
  "integration": {"dt": 1e-3, "t_final": 5},
  "output": "unused.csv"
})";

ConfigOverrides engine_override(Engine e) {
  ConfigOverrides o;
  o.engine = e;
  return o;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::vector<std::string> problems_of(const std::string& text, const ConfigOverrides& o = {}) {
  try {
    parse_config(text, o);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& problems, const std::string& needle) {
  for (const auto& p : problems)
    if (p.find(needle) != std::string::npos) return true;
  return false;
}

TEST(ParseConfig, MinimalMasterConfigGetsDefaults) {
  const RunConfig cfg = parse_config(kDecay, engine_override(Engine::master));
  EXPECT_EQ(cfg.engine, Engine::master);
  EXPECT_EQ(cfg.integration.record_every, 1);
  EXPECT_EQ(cfg.model.dim, 2);
  EXPECT_EQ(cfg.tau, 0.0);
  EXPECT_FALSE(cfg.n_traj.has_value());
  EXPECT_EQ(std::get<StateVector>(cfg.initial), basis_vector(2, 0));
}

TEST(ParseConfig, NonHermitianZMatrix) {
  const auto p = problems_of(R"({
    "engine": "master",
    "model": {"preset": "two_level", "gamma": 1, "Z": [[0, 0.3], [0, 0]]},
    "integration": {"dt": 1e-3, "t_final": 1}, "output": "x.csv"})");
  EXPECT_EQ(p, std::vector<std::string>{"model.Z: not Hermitian, defect 0.3"});
}

TEST(ParseConfig, TrajectoryNeedsNtraj) {
  const auto p = problems_of(R"({
    "engine": "trajectory",
    "model": {"preset": "two_level", "gamma": 1},
    "integration": {"dt": 1e-3, "t_final": 1}, "output": "x.csv"})");
  EXPECT_TRUE(mentions(p, "n_traj required"));
}

TEST(ParseConfig, StrictKeysAndFieldPaths) {
  const auto p = problems_of(R"({
    "engine": "master", "colour": 3,
    "model": {"preset": "two_level", "gamma": 1, "gama": 2},
    "integration": {"dt": -1, "t_final": 1}, "output": "x.csv"})");
  EXPECT_TRUE(mentions(p, "colour: unknown field"));
  EXPECT_TRUE(mentions(p, "model.gama: unknown field"));
  EXPECT_TRUE(mentions(p, "integration.dt"));
}

TEST(ParseConfig, MalformedJson) {
  EXPECT_TRUE(mentions(problems_of("{\"engine\": "), "malformed JSON"));
}

TEST(ParseConfig, CustomModelAndMatrices) {
  const RunConfig cfg = parse_config(R"({
    "engine": "master",
    "model": {"preset": "custom",
              "H": [[1, [0, -0.5]], [[0, 0.5], -1]],
              "c": [[0, 0], [1, 0]],
              "Z": [[0.2, 0], [0, 0]],
              "observables": [{"label": "pop_e", "matrix": [[1, 0], [0, 0]]}]},
    "integration": {"dt": 0.01, "t_final": 1, "record_every": 10},
    "initial_state": {"psi": [[0.6, 0], [0, 0.8]]},
    "output": "x.csv"})");
  EXPECT_EQ(cfg.model.hamiltonian(0, 1), Complex(0.0, -0.5));
  EXPECT_EQ(cfg.model.observables.at(0).label, "pop_e");
  EXPECT_EQ(std::get<StateVector>(cfg.initial)(1), Complex(0.0, 0.8));

  const auto p = problems_of(R"({
    "engine": "master",
    "model": {"preset": "custom", "H": [[0, 0], [0, 0]], "c": [[0, 0, 0], [0, 0, 0], [0, 0, 0]]},
    "integration": {"dt": 0.01, "t_final": 1}, "output": "x.csv"})");
  EXPECT_TRUE(mentions(p, "model.c: dimension 3 does not match model dim 2"));
}

TEST(ParseConfig, EngineSpecificFeedbackRules) {
  const std::string base = R"("model": {"preset": "two_level", "gamma": 1},
    "integration": {"dt": 0.01, "t_final": 1}, "n_traj": 10, "output": "x.csv")";
  EXPECT_TRUE(mentions(problems_of("{\"engine\": \"master\", \"feedback\": {\"tau\": 0.1}, " + base + "}"),
                       "master engine requires zero delay"));
  EXPECT_TRUE(mentions(problems_of("{\"engine\": \"oracle\", " + base + "}"), "k required"));
  EXPECT_TRUE(mentions(problems_of("{\"engine\": \"compare\", \"feedback\": {\"tau\": 0.05, \"k\": 2}, " + base + "}"),
                       "does not match tau"));
  const RunConfig ok = parse_config("{\"engine\": \"compare\", \"feedback\": {\"tau\": 0.03}, " + base + "}");
  EXPECT_EQ(ok.k, 3);
  EXPECT_TRUE(mentions(problems_of("{\"engine\": \"compare\", \"feedback\": {\"k\": 13}, " + base + "}"),
                       "joint_cap"));
}

TEST(ParseConfig, SubcommandMustAgreeWithConfigEngine) {
  const std::string text = R"({"engine": "master", "model": {"preset": "two_level", "gamma": 1},
    "integration": {"dt": 0.01, "t_final": 1}, "output": "x.csv"})";
  EXPECT_TRUE(mentions(problems_of(text, engine_override(Engine::oracle)), "subcommand"));
}

TEST(ParseConfig, OverridesWin) {
  const std::string text = R"({"engine": "trajectory", "model": {"preset": "two_level", "gamma": 1},
    "integration": {"dt": 0.01, "t_final": 1}, "n_traj": 5, "master_seed": 3, "output": "a.csv"})";
  ConfigOverrides o;
  o.output = "b.csv";
  o.seed = 7;
  o.n_traj = 100;
  const RunConfig cfg = parse_config(text, o);
  EXPECT_EQ(cfg.output, "b.csv");
  EXPECT_EQ(cfg.master_seed, 7u);
  EXPECT_EQ(cfg.n_traj, 100);
}

TEST_F(CliTest, MasterDecayCsvMatchesExponential) {
  const std::string cfg = write("run.json", kDecay);
  ASSERT_EQ(cli({"master", "--config", cfg, "--output", path("out.csv"), "--quiet"}), 0) << err_.str();
  const auto rows = parse_csv(read(path("out.csv")));
  ASSERT_EQ(rows.size(), 5002u);
  const std::vector<std::string> header{"time", "sigma_z", "sigma_plus_sigma_minus", "sigma_x",
                                        "sigma_y", "trace", "purity"};
  EXPECT_EQ(rows[0], header);
  for (size_t r = 1; r < rows.size(); ++r) {
    const double t = std::stod(rows[r][0]);
    EXPECT_NEAR(std::stod(rows[r][2]), std::exp(-t), 1e-8) << "t=" << t;
  }
  EXPECT_TRUE(err_.str().find("effective config") == std::string::npos);
}

TEST_F(CliTest, NumbersRoundTripExactly) {
  const double x = std::exp(-1.0) / 3.0;
  EXPECT_EQ(std::stod(format_number(x)), x);
  EXPECT_EQ(std::stod(format_number(0.1)), 0.1);
}

TEST_F(CliTest, TrajectoryOverridesAreEchoed) {
  const std::string cfg = write("run.json", R"({
    "model": {"preset": "two_level", "omega": 2, "gamma": 1},
    "integration": {"dt": 1e-2, "t_final": 1, "record_every": 10},
    "n_traj": 20, "master_seed": 1, "output": "ignored.csv"})");
  ASSERT_EQ(cli({"trajectory", "--config", cfg, "--seed", "7", "--ntraj", "100", "--output",
                 path("t.csv")}),
            0)
      << err_.str();
  const std::string log = err_.str();
  EXPECT_NE(log.find("\"master_seed\":7"), std::string::npos) << log;
  EXPECT_NE(log.find("\"n_traj\":100"), std::string::npos) << log;
  const auto rows = parse_csv(read(path("t.csv")));
  EXPECT_EQ(rows[0][1], "sigma_z");
  EXPECT_EQ(rows[0][2], "sigma_z_se");
  EXPECT_EQ(rows.size(), 12u);
}

TEST_F(CliTest, ConfigErrorExitsTwoWithoutOutput) {
  const std::string cfg = write("bad.json", R"({"model": {"preset": "two_level", "gamma": -1},
    "integration": {"dt": 1e-2, "t_final": 1}, "output": "never.csv"})");
  EXPECT_EQ(cli({"master", "--config", cfg, "--output", path("never.csv")}), 2);
  EXPECT_FALSE(fs::exists(path("never.csv")));
  EXPECT_NE(err_.str().find("model.gamma"), std::string::npos);
}

TEST_F(CliTest, MismatchedDelayInCompareExitsTwo) {
  const std::string cfg = write("cmp.json", R"({"model": {"preset": "two_level", "gamma": 1},
    "feedback": {"tau": 0.1, "k": 2}, "integration": {"dt": 1e-2, "t_final": 1},
    "n_traj": 10, "output": "c.csv"})");
  EXPECT_EQ(cli({"compare", "--config", cfg, "--output", path("c.csv")}), 2);
  EXPECT_NE(err_.str().find("does not match tau"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("c.csv")));
}

TEST_F(CliTest, UnknownFlagOrMissingConfigExitsTwo) {
  const std::string cfg = write("run.json", kDecay);
  EXPECT_EQ(cli({"master", "--config", cfg, "--bogus"}), 2);
  EXPECT_EQ(cli({"master"}), 2);
  EXPECT_EQ(cli({"teleport", "--config", cfg}), 2);
  EXPECT_EQ(cli({"master", "--config", path("missing.json")}), 2);
}

TEST_F(CliTest, NumericalBreachExitsThree) {
  const std::string cfg = write("big.json", R"({"model": {"preset": "two_level", "gamma": 40},
    "integration": {"dt": 0.1, "t_final": 5}, "output": "b.csv"})");
  EXPECT_EQ(cli({"master", "--config", cfg, "--output", path("b.csv"), "--quiet"}), 3);
  EXPECT_FALSE(fs::exists(path("b.csv")));
}

TEST_F(CliTest, OracleEngineRuns) {
  const std::string cfg = write("o.json", R"({"model": {"preset": "cavity", "N": 3, "kappa": 1, "chi": 0.5},
    "feedback": {"k": 1}, "integration": {"dt": 1e-2, "t_final": 1, "record_every": 10},
    "initial_state": {"basis": 2}, "output": "o.csv"})");
  ASSERT_EQ(cli({"oracle", "--config", cfg, "--output", path("o.csv"), "--quiet"}), 0) << err_.str();
  const auto rows = parse_csv(read(path("o.csv")));
  EXPECT_EQ(rows[0], (std::vector<std::string>{"time", "photon_number", "trace", "purity"}));
  EXPECT_NEAR(std::stod(rows[1][1]), 2.0, 1e-12);
  EXPECT_LT(std::stod(rows.back()[1]), 2.0 * std::exp(-1.0) + 0.05);
}

TEST_F(CliTest, CompareEnginePassesAtZeroDelay) {
  const std::string cfg = write("cmp.json", R"({
    "model": {"preset": "two_level", "omega": 2, "gamma": 1, "Z": {"sigma_x": 1}},
    "feedback": {"tau": 0}, "integration": {"dt": 1e-3, "t_final": 5, "record_every": 100},
    "n_traj": 4000, "master_seed": 11, "output": "c.csv"})");
  EXPECT_EQ(cli({"compare", "--config", cfg, "--output", path("c.csv"), "--quiet"}), 0) << err_.str();
  EXPECT_NE(err_.str().find("compare: PASS"), std::string::npos);
  const auto rows = parse_csv(read(path("c.csv")));
  EXPECT_EQ(rows[0][1], "sigma_z_traj_minus_me");
  EXPECT_EQ(rows[0].back(), "trace_distance_oracle_me");
}

TEST_F(CliTest, CompareEngineFailsWhenBandsAreTooTight) {
  // A forced-zero allowance with a one-sigma band cannot hold at 101 times.
  const std::string cfg = write("cmp.json", R"({
    "model": {"preset": "two_level", "omega": 2, "gamma": 1, "Z": {"sigma_x": 1}},
    "feedback": {"k": 1}, "integration": {"dt": 1e-2, "t_final": 5, "record_every": 5},
    "n_traj": 100, "master_seed": 11, "output": "c.csv",
    "discretization_allowance": 0, "n_sigma": 0.1})");
  EXPECT_EQ(cli({"compare", "--config", cfg, "--output", path("c.csv"), "--quiet"}), 1);
  EXPECT_NE(err_.str().find("compare: FAIL"), std::string::npos);
}

TEST_F(CliTest, CsvIsByteIdenticalAcrossRunsAndThreadCounts) {
  const std::string cfg = write("run.json", R"({
    "model": {"preset": "two_level", "omega": 2, "gamma": 1, "Z": {"sigma_x": 1}},
    "feedback": {"tau": 0.02}, "integration": {"dt": 1e-2, "t_final": 2, "record_every": 10},
    "n_traj": 500, "master_seed": 99, "output": "t.csv"})");
  ASSERT_EQ(cli({"trajectory", "--config", cfg, "--output", path("a.csv"), "--threads", "1"}), 0);
  ASSERT_EQ(cli({"trajectory", "--config", cfg, "--output", path("b.csv"), "--threads", "4", "--quiet"}), 0);
  ASSERT_EQ(cli({"trajectory", "--config", cfg, "--output", path("c.csv"), "--threads", "1"}), 0);
  EXPECT_EQ(read(path("a.csv")), read(path("b.csv")));
  EXPECT_EQ(read(path("a.csv")), read(path("c.csv")));
}

}  // namespace
}  // namespace qfb
