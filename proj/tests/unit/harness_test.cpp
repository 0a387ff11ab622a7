#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "lab/errors.hpp"
#include "lab/harness.hpp"
#include "lab/tensor_io.hpp"

using namespace lab;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

const char* kSmall = R"(
# tiny run
n_total = 6
grid_h = 2
grid_w = 2
m_min = 1
m_max = 3
d_latent = 3
d_input = 4
d_hidden = 5
d_rep = 4
steps = 7
metric_every = 3
learning_rate = 0.1
seed = 3
data_seed = 4
)";

// Base config with `key = value` overrides applied on top.
ExperimentConfig small(const std::string& extra = "") {
  auto cfg = parse(kSmall);
  std::istringstream in(extra);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(' '));
      s.erase(s.find_last_not_of(' ') + 1);
      return s;
    };
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lab_harness_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Config, ParsesCommentsAndSharedKeys) {
  const auto c = parse(std::string(kSmall) + "tau_prime = 0.3   # local\nshared_heads = true\n");
  EXPECT_EQ(c.data.n_total, 6u);
  EXPECT_EQ(c.model.grid_h, 2u);
  EXPECT_EQ(c.model.d_input, 4u);
  EXPECT_EQ(c.loss.tau_prime, 0.3);
  EXPECT_THROW(parse(std::string(kSmall) + "steps = 2\n"), ConfigError);
  EXPECT_TRUE(c.model.shared_heads);
  EXPECT_EQ(c.metric_temperature(), 0.3);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse("bogus = 1\n"), ConfigError);
  EXPECT_THROW(parse("steps = -3\n"), ConfigError);
  EXPECT_THROW(parse("tau = abc\n"), ConfigError);
  EXPECT_THROW(parse("tau = 0.1\ntau = 0.2\n"), ConfigError);
  EXPECT_THROW(parse("just words\n"), ConfigError);
  EXPECT_THROW(small("learning_rate = -1\n").validate(), ConfigError);
  EXPECT_THROW(small("batch_size = 7\n").validate(), ConfigError);
  EXPECT_THROW(small("objective = nope\n"), ConfigError);
}

TEST(Config, UniformityObjectivesNeedExplicitEta) {
  EXPECT_THROW(small("objective = lovt_uni_gauss\n").validate(), ConfigError);
  EXPECT_THROW(small("objective = uni_only\n").validate(), ConfigError);
  EXPECT_NO_THROW(small("objective = lovt_uni_xent\neta = 0.5\n").validate());
  EXPECT_NO_THROW(small("objective = lovt\n").validate());
}

TEST(Config, SeedEnvironmentOverride) {
  auto c = small();
  ::setenv("LAB_SEED", "99", 1);
  apply_env_overrides(c);
  ::unsetenv("LAB_SEED");
  EXPECT_EQ(c.seed, 99u);
  apply_env_overrides(c);
  EXPECT_EQ(c.seed, 99u);
}

TEST(Train, TrajectoryLengthIncludesStepZeroAndFinal) {
  const auto r = train(small());
  ASSERT_EQ(r.trajectory.size(), 4u);  // ceil(7 / 3) + 1
  EXPECT_EQ(r.trajectory[0].step, 0u);
  EXPECT_EQ(r.trajectory[2].step, 6u);
  EXPECT_EQ(r.trajectory[3].step, 7u);
  const auto even = train(small("steps = 6\n"));
  EXPECT_EQ(even.trajectory.size(), 3u);
}

TEST(Train, ZeroLearningRateKeepsTrajectoryConstant) {
  const auto r = train(small("learning_rate = 0\n"));
  for (const auto& m : r.trajectory) {
    auto same = m;
    same.step = r.trajectory.front().step;
    EXPECT_EQ(metric_csv_row(same), metric_csv_row(r.trajectory.front()));
  }
}

TEST(Train, IdenticalRunsGiveIdenticalCsv) {
  const auto cfg = small("objective = lovt\nbatch_size = 4\n");
  EXPECT_EQ(metrics_csv(train(cfg)), metrics_csv(train(cfg)));
  EXPECT_NE(metrics_csv(train(cfg)), metrics_csv(train(small("objective = lovt\nbatch_size = 4\nseed = 5\n"))));
}

TEST(Train, UniOnlyOnFreeRepresentationsDecreasesEveryStep) {
  const auto r = train(parse(R"(
objective = uni_only
eta = 1
encoder = free
projection_heads = false
n_total = 8
grid_h = 2
grid_w = 4
m_min = 2
m_max = 4
d_latent = 4
d_input = 4
d_rep = 4
learning_rate = 0.1
steps = 200
metric_every = 1
)"));
  ASSERT_EQ(r.trajectory.size(), 201u);
  for (std::size_t i = 1; i < r.trajectory.size(); ++i) {
    EXPECT_LT(r.trajectory[i].loss_total, r.trajectory[i - 1].loss_total) << "step " << i;
  }
}

TEST(Train, HugeStepDivergesWithStep) {
  try {
    train(small("encoder = free\nd_rep = 4\nprojection_heads = false\nobjective = uni_only\neta = 1\nlearning_rate = 1e308\n"));
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_LE(e.step(), 7u);
  }
}

TEST(Train, CsvHeaderCarriesConfigColumns) {
  const auto csv = metrics_csv(train(small()));
  const std::string header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(header.rfind(metric_csv_header() + ",cfg_objective,", 0), 0u);
  EXPECT_NE(header.find(",cfg_tau_prime,"), std::string::npos);
  EXPECT_NE(header.find(",cfg_seed,"), std::string::npos);
}

TEST(Train, WritesRunDirectoryAndRepsRoundTrip) {
  const auto dir = temp_dir("run");
  const auto r = train(small());
  write_run(dir, r);
  for (const char* f : {"metrics.csv", "summary.txt", "params.txt", "reps.txt"}) EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_EQ(slurp(dir / "metrics.csv"), metrics_csv(r));
  EXPECT_NE(slurp(dir / "summary.txt").find("wall_seconds: "), std::string::npos);

  std::ifstream in(dir / "reps.txt");
  const StoredReps reps = read_reps(in);
  EXPECT_EQ(reps.step, 7u);
  EXPECT_EQ(reps.y_s, r.final_outputs.y_s);
  const auto m = metrics_from_reps(reps, r.config.metric_temperature());
  EXPECT_EQ(m.unif_local_image, r.final_record.unif_local_image);
  EXPECT_EQ(m.unif_global_report, r.final_record.unif_global_report);
  EXPECT_EQ(m.align_global, r.final_record.align_global);

  std::ifstream pin(dir / "params.txt");
  EXPECT_EQ(read_params(pin), r.params);
  std::filesystem::remove_all(dir);
}

TEST(Reps, MalformedInputRejected) {
  std::istringstream bad("REPS v2 0 6\n");
  EXPECT_THROW(read_reps(bad), ParseError);
  std::istringstream missing("REPS v1 0 0\n");
  EXPECT_THROW(read_reps(missing), ParseError);
}

TEST(Grid, ParsesAxesAndEnumeratesInOrder) {
  std::istringstream in("tau_prime = 0.1, 0.2\n# c\neta = 0.25,0.5,0.75\n");
  const auto g = parse_grid(in);
  EXPECT_EQ(g.cells(), 6u);
  const auto c4 = g.cell(4);
  EXPECT_EQ(c4[0].second, "0.2");
  EXPECT_EQ(c4[1].second, "0.5");
  std::istringstream dup("eta = 1\neta = 2\n");
  EXPECT_THROW(parse_grid(dup), ConfigError);
  std::istringstream empty("# nothing\n");
  EXPECT_THROW(parse_grid(empty), ConfigError);
}

TEST(Grid, DefaultTuningGrids) {
  EXPECT_EQ(default_grid(UniformityVariant::Gauss).cells(), 15u);
  const auto x = default_grid(UniformityVariant::Xent);
  EXPECT_EQ(x.axes[1].second, (std::vector<std::string>{"0.05", "0.1", "0.2", "0.3", "0.5"}));
  EXPECT_EQ(x.axes[2].second, (std::vector<std::string>{"0.25", "0.5", "0.75"}));
}

TEST(Sweep, SinglePointEqualsTrain) {
  std::istringstream in("tau_prime = 0.2\n");
  const auto base = small();
  const auto cells = sweep(base, parse_grid(in));
  ASSERT_EQ(cells.size(), 1u);
  ASSERT_TRUE(cells[0].ok);
  auto direct = base;
  set_config_value(direct, "tau_prime", "0.2");
  EXPECT_EQ(metrics_csv(cells[0].result), metrics_csv(train(direct)));
}

TEST(Sweep, FailedCellIsIsolated) {
  std::istringstream in("objective = lovt_uni_gauss\ntau_prime = 0.3, -1, 0.5\neta = 0.25\n");
  const auto cells = sweep(small(), parse_grid(in));
  ASSERT_EQ(cells.size(), 3u);
  EXPECT_TRUE(cells[0].ok);
  EXPECT_FALSE(cells[1].ok);
  EXPECT_TRUE(cells[2].ok);
  EXPECT_EQ(cells[2].config.seed, 5u);
  const auto csv = sweep_csv(cells);
  std::istringstream lines(csv);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[2].rfind(empty_metric_csv_row(), 0), 0u);

  const auto dir = temp_dir("sweep");
  write_sweep(dir, cells);
  EXPECT_TRUE(std::filesystem::exists(dir / "sweep_failures.txt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "cell_2" / "metrics.csv"));
  EXPECT_FALSE(std::filesystem::exists(dir / "cell_1"));
  std::filesystem::remove_all(dir);
}

TEST(Verify, SuitePassesAndPerturbationFails) {
  const auto checks = run_identity_suite();
  std::set<std::string> names;
  for (const auto& c : checks) {
    EXPECT_TRUE(c.passed) << c.name << " " << c.max_error;
    names.insert(c.name);
  }
  EXPECT_GE(names.size(), 8u);
  VerifyOptions bad;
  bad.perturb = 1e-6;
  bool recomposition_failed = false;
  for (const auto& c : run_identity_suite(bad))
    if (c.name == "recomposition_global") recomposition_failed = !c.passed;
  EXPECT_TRUE(recomposition_failed);
  EXPECT_EQ(verify_csv({}).substr(0, 29), "check,trials,max_error,status");
}
