#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "lab/errors.hpp"
#include "lab/harness.hpp"

namespace {

int run_verify(double perturb, const std::string& out_path) {
  lab::VerifyOptions opts;
  opts.perturb = perturb;
  const auto checks = lab::run_identity_suite(opts);
  const std::string csv = lab::verify_csv(checks);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream(out_path, std::ios::binary) << csv;
  }
  for (const auto& c : checks)
    if (!c.passed) return 1;
  return 0;
}

int run_train(const std::string& config, const std::string& out) {
  auto cfg = lab::load_config(config);
  lab::apply_env_overrides(cfg);
  const auto result = lab::train(cfg);
  lab::write_run(out, result);
  std::cout << lab::metric_csv_header() << "\n" << lab::metric_csv_row(result.final_record) << "\n";
  return 0;
}

int run_sweep(const std::string& config, const std::string& grid, const std::string& out) {
  auto cfg = lab::load_config(config);
  lab::apply_env_overrides(cfg);
  const auto cells = lab::sweep(cfg, lab::load_grid(grid));
  lab::write_sweep(out, cells);
  std::size_t failed = 0;
  for (const auto& c : cells) failed += c.ok ? 0 : 1;
  std::cout << cells.size() << " cells, " << failed << " failed\n";
  return failed == 0 ? 0 : 3;
}

int run_metrics(const std::string& reps_path, double tau, double t) {
  std::ifstream in(reps_path);
  if (!in) throw lab::Error("cannot open " + reps_path);
  const auto m = lab::metrics_from_reps(lab::read_reps(in), tau, t);
  std::cout << "unif_local_image,unif_local_report,unif_global_image,unif_global_report,align_global\n"
            << lab::format_double(m.unif_local_image) << "," << lab::format_double(m.unif_local_report) << ","
            << lab::format_double(m.unif_global_image) << "," << lab::format_double(m.unif_global_report) << ","
            << lab::format_double(m.align_global) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive loss decomposition lab"};
  app.require_subcommand(1);

  double perturb = 0.0;
  std::string verify_out;
  auto* verify = app.add_subcommand("verify", "Run the identity suite and print one CSV row per check");
  verify->add_option("--perturb", perturb, "Noise added to one decomposition component");
  verify->add_option("--out", verify_out, "Write the CSV here instead of stdout");

  std::string config, out, grid;
  auto* train = app.add_subcommand("train", "Train one configuration");
  train->add_option("--config", config, "key = value config file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "Train every cell of a grid");
  sweep->add_option("--config", config, "Base config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--grid", grid, "Grid file: key = v1, v2, ...")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "Output directory")->required();

  std::string reps;
  double tau = 0.0, t = 2.0;
  auto* metrics = app.add_subcommand("metrics", "Recompute metrics from a reps.txt dump");
  metrics->add_option("--reps", reps, "reps.txt from a run")->required()->check(CLI::ExistingFile);
  metrics->add_option("--tau", tau, "Metric temperature")->required()->check(CLI::PositiveNumber);
  metrics->add_option("--t", t, "Global uniformity scale")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) return run_verify(perturb, verify_out);
    if (*train) return run_train(config, out);
    if (*sweep) return run_sweep(config, grid, out);
    if (*metrics) return run_metrics(reps, tau, t);
  } catch (const lab::DivergenceError& e) {
    std::cerr << "diverged at step " << e.step() << ": " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
