#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lab/losses.hpp"
#include "lab/metrics.hpp"
#include "lab/objective.hpp"
#include "lab/tensor_io.hpp"
#include "lab/toy_model.hpp"

namespace lab {

/// Everything a run depends on. Parsed from flat `key = value` text.
struct ExperimentConfig {
  SyntheticDatasetSpec data;
  ModelConfig model;
  LossParams loss;
  ObjectiveSpec objective;
  double learning_rate = 0.05;
  std::size_t steps = 100;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t metric_every = 10;
  double tau_metric = 0.0;     // <= 0 means the training tau_prime
  double global_t = 2.0;
  std::uint64_t seed = 0;      // parameter init and batch order
  std::set<std::string> explicit_keys;

  double metric_temperature() const { return tau_metric > 0.0 ? tau_metric : loss.tau_prime; }
  std::size_t effective_batch() const { return batch_size == 0 ? data.n_total : batch_size; }

  /// Throws ConfigError.
  void validate() const;
};

/// Apply one `key = value` pair. Unknown keys and malformed values throw ConfigError.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Parse the flat format: one `key = value` per line, `#` starts a comment.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// LAB_SEED, when set, replaces cfg.seed.
void apply_env_overrides(ExperimentConfig& cfg);

/// Ordered (key, value) pairs echoed into CSVs as cfg_<key> columns.
std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& cfg);

struct RunResult {
  MetricRecord final_record;
  std::vector<MetricRecord> trajectory;
  double wall_seconds = 0.0;
  ExperimentConfig config;
  NamedTensors params;
  ForwardOutputs final_outputs;
};

/// Metrics of params on the whole dataset.
MetricRecord measure(std::size_t step, const NamedTensors& params, const SyntheticDataset& data,
                     const ExperimentConfig& cfg);

/// Gradient descent. Logs metrics at step 0, every metric_every steps and after
/// the last step. A non-finite loss or gradient throws DivergenceError.
RunResult train(const ExperimentConfig& cfg);

/// metrics.csv text: header with cfg_ columns, one row per trajectory entry.
std::string metrics_csv(const RunResult& r);

/// metrics.csv, summary.txt, params.txt and reps.txt under dir.
void write_run(const std::filesystem::path& dir, const RunResult& r);

/// Final representations: y_s, y_r (ragged) and ybar_s, ybar_r, zbar_s, zbar_r.
///   REPS v1 <step> <count>, then per entry `NAME <name> <RAGGED|TENSOR>` and its block.
void write_reps(std::ostream& out, std::size_t step, const ForwardOutputs& f);

struct StoredReps {
  std::size_t step = 0;
  RaggedBatch y_s{Modality::Image, {}};
  RaggedBatch y_r{Modality::Report, {}};
  Matrix ybar_s, ybar_r, zbar_s, zbar_r;
};

StoredReps read_reps(std::istream& in);

struct RepsMetrics {
  double unif_local_image;
  double unif_local_report;
  double unif_global_image;
  double unif_global_report;
  double align_global;
};

RepsMetrics metrics_from_reps(const StoredReps& reps, double tau_metric, double t = 2.0);

/// Sweep axes in file order: `key = v1, v2, ...`. Cells are the cartesian
/// product with the first axis outermost.
struct SweepGrid {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;

  std::size_t cells() const;
  std::vector<std::pair<std::string, std::string>> cell(std::size_t index) const;
};

SweepGrid parse_grid(std::istream& in);
SweepGrid load_grid(const std::filesystem::path& path);

/// Default tuning grid for a uniformity variant: tau_prime x eta.
SweepGrid default_grid(UniformityVariant v);

struct SweepCell {
  std::size_t index = 0;
  ExperimentConfig config;
  bool ok = false;
  std::string error;
  RunResult result;
};

/// Runs every cell with seed = base seed + cell index. A failing cell is
/// recorded and does not stop the sweep.
std::vector<SweepCell> sweep(const ExperimentConfig& base, const SweepGrid& grid);

/// One row per cell (final metrics), grid order; failed cells have empty metric fields.
std::string sweep_csv(const std::vector<SweepCell>& cells);

/// sweep.csv, sweep_failures.txt (when any cell failed) and cell_<i>/ run dirs.
void write_sweep(const std::filesystem::path& dir, const std::vector<SweepCell>& cells);

struct CheckResult {
  std::string name;
  std::size_t trials = 0;
  double max_error = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

struct VerifyOptions {
  double perturb = 0.0;  // noise added to the global distribution prior
  RngSeed seed{2024};
};

/// The identity suite: recomposition, xi rewrites, separability, constant-local
/// equivalence with its negative control, Gaussian offset and gradient checks.
std::vector<CheckResult> run_identity_suite(const VerifyOptions& opts = {});

std::string verify_csv(const std::vector<CheckResult>& checks);

}  // namespace lab
