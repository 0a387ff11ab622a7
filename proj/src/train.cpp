#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lab/errors.hpp"
#include "lab/harness.hpp"

namespace lab {

namespace {

constexpr std::uint64_t kBatchStream = 0x9e3779b97f4a7c15ULL;

std::string echo_header(const ExperimentConfig& cfg) {
  std::string out = metric_csv_header();
  for (const auto& [k, v] : config_echo(cfg)) out += ",cfg_" + k;
  return out;
}

std::string echo_values(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_echo(cfg)) out += "," + v;
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

MetricRecord measure(std::size_t step, const NamedTensors& params, const SyntheticDataset& data,
                     const ExperimentConfig& cfg) {
  const LossConfig lc(cfg.loss);
  const ModelBatch batch = full_batch(data);
  const UniformityVariant v = cfg.objective.variant();
  const auto uni = [&](const RaggedBatch& z) {
    return v == UniformityVariant::Gauss ? uni_gauss(z, lc.tau_prime()) : uni_xent(z, lc.tau_prime());
  };
  MetricRecord r;
  r.step = step;
  try {
    const ForwardOutputs f = forward(params, cfg.model, batch);
    r.loss_total = ad::evaluate(
        [&](ad::Tape& tape, const ad::LeafMap& p) { return objective_loss(forward(tape, p, cfg.model, batch), lc, cfg.objective); },
        params);
    r.loss_global = global_loss(f.global, lc);
    r.loss_uni_image = uni(f.z_s);
    r.loss_uni_report = uni(f.z_r);
    r.align_global = global_alignment(f.global);
    r.unif_local_image = local_uniformity(f.y_s, cfg.metric_temperature());
    r.unif_local_report = local_uniformity(f.y_r, cfg.metric_temperature());
    r.unif_global_image = global_uniformity(f.ybar_s, cfg.global_t);
    r.unif_global_report = global_uniformity(f.ybar_r, cfg.global_t);
  } catch (const EvaluationError& e) {
    throw DivergenceError("non-finite values at step " + std::to_string(step) + ": " + e.what(), step);
  }
  if (!r.all_finite()) throw DivergenceError("non-finite metrics at step " + std::to_string(step), step);
  return r;
}

RunResult train(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const SyntheticDataset data = generate_dataset(cfg.data);
  NamedTensors params = init_params(cfg.model, data, RngSeed{cfg.seed});
  const LossConfig lc(cfg.loss);

  const std::size_t n = data.size();
  const std::size_t b = cfg.effective_batch();
  Rng order_rng(RngSeed{cfg.seed ^ kBatchStream});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;
  const ModelBatch full = full_batch(data);

  RunResult result;
  result.config = cfg;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (step % cfg.metric_every == 0) result.trajectory.push_back(measure(step, params, data, cfg));

    ModelBatch batch = full;
    if (b < n) {
      if (cursor + b > n) {
        std::shuffle(order.begin(), order.end(), order_rng.engine());
        cursor = 0;
      }
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                   order.begin() + static_cast<std::ptrdiff_t>(cursor + b));
      std::sort(idx.begin(), idx.end());
      cursor += b;
      batch = select(data, idx);
    }
    ad::GradResult g;
    try {
      g = ad::grad(
          [&](ad::Tape& tape, const ad::LeafMap& p) { return objective_loss(forward(tape, p, cfg.model, batch), lc, cfg.objective); },
          params);
    } catch (const EvaluationError& e) {
      throw DivergenceError("non-finite values at step " + std::to_string(step) + ": " + e.what(), step);
    }
    if (!std::isfinite(g.value)) throw DivergenceError("non-finite loss at step " + std::to_string(step), step);
    for (auto& [name, value] : params) {
      const Matrix& d = g.gradients.at(name);
      if (!d.all_finite()) throw DivergenceError("non-finite gradient for " + name + " at step " + std::to_string(step), step);
      auto dst = value.data();
      const auto src = d.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= cfg.learning_rate * src[i];
    }
  }
  result.trajectory.push_back(measure(cfg.steps, params, data, cfg));
  result.final_record = result.trajectory.back();
  result.final_outputs = forward(params, cfg.model, full);
  result.params = std::move(params);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::string metrics_csv(const RunResult& r) {
  std::string out = echo_header(r.config) + "\n";
  const std::string tail = echo_values(r.config);
  for (const auto& m : r.trajectory) out += metric_csv_row(m) + tail + "\n";
  return out;
}

void write_run(const std::filesystem::path& dir, const RunResult& r) {
  std::filesystem::create_directories(dir);
  write_file(dir / "metrics.csv", metrics_csv(r));

  std::ostringstream summary;
  summary << "objective: " << to_string(r.config.objective.kind) << "\n";
  summary << "steps: " << r.config.steps << "\n";
  summary << "wall_seconds: " << format_double(r.wall_seconds) << "\n";
  std::istringstream names(metric_csv_header());
  std::istringstream values(metric_csv_row(r.final_record));
  std::string name, value;
  while (std::getline(names, name, ',') && std::getline(values, value, ',')) summary << "final_" << name << ": " << value << "\n";
  write_file(dir / "summary.txt", summary.str());

  std::ostringstream params;
  write_params(params, r.params);
  write_file(dir / "params.txt", params.str());

  std::ostringstream reps;
  write_reps(reps, r.config.steps, r.final_outputs);
  write_file(dir / "reps.txt", reps.str());
}

void write_reps(std::ostream& out, std::size_t step, const ForwardOutputs& f) {
  out << "REPS v1 " << step << " 6\n";
  out << "NAME y_s RAGGED\n";
  write_ragged(out, f.y_s);
  out << "NAME y_r RAGGED\n";
  write_ragged(out, f.y_r);
  const std::pair<const char*, const Matrix*> tensors[] = {
      {"ybar_s", &f.ybar_s}, {"ybar_r", &f.ybar_r}, {"zbar_s", &f.global.zg_s}, {"zbar_r", &f.global.zg_r}};
  for (const auto& [name, m] : tensors) {
    out << "NAME " << name << " TENSOR\n";
    write_tensor(out, *m);
  }
}

StoredReps read_reps(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("reps: missing header");
  std::istringstream head(line);
  std::string magic, version;
  std::size_t step = 0, count = 0;
  if (!(head >> magic >> version >> step >> count) || magic != "REPS" || version != "v1") {
    throw ParseError("reps: bad header '" + line + "'");
  }
  StoredReps out;
  out.step = step;
  std::set<std::string> seen;
  for (std::size_t e = 0; e < count; ++e) {
    if (!std::getline(in, line)) throw ParseError("reps: truncated");
    std::istringstream entry(line);
    std::string tag, name, kind;
    if (!(entry >> tag >> name >> kind) || tag != "NAME") throw ParseError("reps: expected NAME line, got '" + line + "'");
    seen.insert(name);
    if (kind == "RAGGED") {
      RaggedBatch b = read_ragged(in);
      if (name == "y_s") out.y_s = std::move(b);
      else if (name == "y_r") out.y_r = std::move(b);
      else throw ParseError("reps: unexpected ragged entry '" + name + "'");
    } else if (kind == "TENSOR") {
      Matrix m = read_tensor(in);
      if (name == "ybar_s") out.ybar_s = std::move(m);
      else if (name == "ybar_r") out.ybar_r = std::move(m);
      else if (name == "zbar_s") out.zbar_s = std::move(m);
      else if (name == "zbar_r") out.zbar_r = std::move(m);
      else throw ParseError("reps: unexpected tensor entry '" + name + "'");
    } else {
      throw ParseError("reps: unknown block kind '" + kind + "'");
    }
  }
  for (const char* need : {"y_s", "y_r", "ybar_s", "ybar_r", "zbar_s", "zbar_r"})
    if (!seen.count(need)) throw ParseError(std::string("reps: missing entry ") + need);
  return out;
}

RepsMetrics metrics_from_reps(const StoredReps& r, double tau_metric, double t) {
  return {local_uniformity(r.y_s, tau_metric), local_uniformity(r.y_r, tau_metric), global_uniformity(r.ybar_s, t),
          global_uniformity(r.ybar_r, t), global_alignment(GlobalReps{r.zbar_s, r.zbar_r})};
}

}  // namespace lab
