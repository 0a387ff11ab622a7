#include "lab/losses.hpp"

#include <cmath>
#include <string>

#include "lab/errors.hpp"

namespace lab {

namespace {

constexpr double kStochasticTol = 1e-10;

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void check_nonnegative(const Matrix& m, const char* what) {
  for (double v : m.data()) require(v >= 0.0 && std::isfinite(v), std::string(what) + ": negative or non-finite entry");
}

void check_rows_sum_to_one(const Matrix& m, const char* what) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double v : m.row(r)) s += v;
    require(std::abs(s - 1.0) <= kStochasticTol, std::string(what) + ": row does not sum to 1");
  }
}

std::vector<ad::Var> constants(ad::Tape& tape, std::span<const Matrix> ms) {
  std::vector<ad::Var> out;
  out.reserve(ms.size());
  for (const auto& m : ms) out.push_back(tape.constant(m));
  return out;
}

void require_batch(std::size_t n) {
  if (n == 0) throw EmptyBatchError("loss: empty batch");
}

}  // namespace

LossConfig::LossConfig(const LossParams& p) : params_(p) {
  require(p.tau > 0.0 && std::isfinite(p.tau), "LossConfig: tau must be > 0");
  require(p.tau_prime > 0.0 && std::isfinite(p.tau_prime), "LossConfig: tau_prime must be > 0");
  require(p.lambda >= 0.0 && p.lambda <= 1.0, "LossConfig: lambda must lie in [0, 1]");
  require(p.gamma >= 0.0 && std::isfinite(p.gamma), "LossConfig: gamma must be >= 0");
  require(p.mu >= 0.0 && std::isfinite(p.mu), "LossConfig: mu must be >= 0");
  require(p.nu >= 0.0 && std::isfinite(p.nu), "LossConfig: nu must be >= 0");
  require(p.eta >= 0.0 && std::isfinite(p.eta), "LossConfig: eta must be >= 0");
}

void GlobalReps::validate() const {
  if (!zg_s.same_shape(zg_r)) {
    throw DimensionError("GlobalReps: shapes " + shape(zg_s) + " and " + shape(zg_r) + " differ");
  }
  for (const Matrix* m : {&zg_s, &zg_r})
    for (std::size_t r = 0; r < m->rows(); ++r)
      if (norm(m->row(r)) == 0.0) throw DegenerateVectorError("GlobalReps: zero row " + std::to_string(r));
}

void WeightSet::validate(Mode mode) const {
  if (w_s.size() != w_r.size()) throw DimensionError("WeightSet: w_s and w_r cover different batch sizes");
  if (p_s.rows() != p_s.cols()) throw DimensionError("WeightSet: p_s must be square");
  check_nonnegative(p_s, "WeightSet.p_s");
  for (const auto& w : w_s) {
    if (w.rows() != 1 || w.cols() != p_s.rows()) throw DimensionError("WeightSet: w_s must be 1xK");
    check_nonnegative(w, "WeightSet.w_s");
  }
  for (const auto& w : w_r) {
    if (w.rows() != 1 || w.cols() == 0) throw DimensionError("WeightSet: w_r must be 1xM_i");
    check_nonnegative(w, "WeightSet.w_r");
  }
  if (!alpha_rs.empty() || !alpha_sr.empty()) {
    if (alpha_rs.size() != w_s.size() || alpha_sr.size() != w_s.size()) {
      throw DimensionError("WeightSet: attention matrices must cover the batch");
    }
    for (std::size_t i = 0; i < alpha_rs.size(); ++i) {
      const std::size_t k = p_s.rows();
      const std::size_t m = w_r[i].cols();
      if (alpha_rs[i].rows() != k || alpha_rs[i].cols() != m) throw DimensionError("WeightSet: alpha_rs must be KxM_i");
      if (alpha_sr[i].rows() != m || alpha_sr[i].cols() != k) throw DimensionError("WeightSet: alpha_sr must be M_ixK");
      check_nonnegative(alpha_rs[i], "WeightSet.alpha_rs");
      check_nonnegative(alpha_sr[i], "WeightSet.alpha_sr");
      check_rows_sum_to_one(alpha_rs[i], "WeightSet.alpha_rs");
      check_rows_sum_to_one(alpha_sr[i], "WeightSet.alpha_sr");
    }
  }
  if (mode == Mode::Normalized) {
    for (const auto& w : w_s) check_rows_sum_to_one(w, "WeightSet.w_s");
    for (const auto& w : w_r) check_rows_sum_to_one(w, "WeightSet.w_r");
    check_rows_sum_to_one(p_s, "WeightSet.p_s");
  }
}

WeightSet WeightSet::uniform(const RaggedBatch& zs, const RaggedBatch& zr) {
  if (zs.size() != zr.size()) throw DimensionError("WeightSet::uniform: batch sizes differ");
  WeightSet w;
  const std::size_t k = zs.rows_per_sample();
  w.p_s = Matrix::identity(k);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    w.w_s.emplace_back(1, k, 1.0 / static_cast<double>(k));
    const std::size_t m = zr[i].rows();
    w.w_r.emplace_back(1, m, 1.0 / static_cast<double>(m));
  }
  return w;
}

std::string_view to_string(UniformityVariant v) { return v == UniformityVariant::Gauss ? "gauss" : "xent"; }

UniformityVariant uniformity_variant_from_string(std::string_view s) {
  if (s == "gauss") return UniformityVariant::Gauss;
  if (s == "xent") return UniformityVariant::Xent;
  throw ConfigError("unknown uniformity variant '" + std::string(s) + "'");
}

UniformityDefaults uniformity_defaults(UniformityVariant v) {
  if (v == UniformityVariant::Gauss) {
    return {0.25, {0.2, 0.5}, {0.1, 0.2, 0.3, 0.5, 1.0}, {0.1, 0.25, 0.5}};
  }
  return {0.5, {0.2, 0.3}, {0.05, 0.1, 0.2, 0.3, 0.5}, {0.25, 0.5, 0.75}};
}

namespace traced {

Var global_loss(Var zg_s, Var zg_r, const LossConfig& c) {
  const std::size_t n = zg_s.rows();
  require_batch(n);
  if (!zg_s.value().same_shape(zg_r.value())) throw DimensionError("global_loss: shape mismatch");
  ad::Tape& tape = *zg_s.tape();
  const Var logits = scale(cosine(zg_s, zg_r), 1.0 / c.tau());
  const Var eye = tape.constant(Matrix::identity(n));
  // -log softmax at the matching pair, in both directions.
  const Var sr = sum(log_softmax_rows(logits) * eye);
  const Var rs = sum(log_softmax_rows(transpose(logits)) * eye);
  const double inv_n = 1.0 / static_cast<double>(n);
  return scale(sr, -c.lambda() * inv_n) + scale(rs, -(1.0 - c.lambda()) * inv_n);
}

Var local_image_loss(std::span<const Var> zs, std::span<const Var> z_rs, std::span<const Var> w_s,
                     Var p_s, const LossConfig& c) {
  const std::size_t n = zs.size();
  require_batch(n);
  if (z_rs.size() != n || w_s.size() != n) throw DimensionError("local_image_loss: batch sizes differ");
  const std::size_t k = p_s.rows();
  if (p_s.cols() != k) throw DimensionError("local_image_loss: p_s must be square");
  std::vector<Var> per_sample;
  per_sample.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (zs[i].rows() != k || z_rs[i].rows() != k || w_s[i].cols() != k || w_s[i].rows() != 1) {
      throw DimensionError("local_image_loss: sample " + std::to_string(i) + " disagrees with K=" +
                           std::to_string(k));
    }
    const Var logits = scale(cosine(zs[i], z_rs[i]), 1.0 / c.tau_prime());
    const Var both = log_softmax_rows(logits) + log_softmax_rows(transpose(logits));
    const Var weight = broadcast_cols(transpose(w_s[i]), k);  // (k, l) -> w_k
    per_sample.push_back(sum(weight * p_s * both));
  }
  return scale(sum(concat_rows(per_sample)), -1.0 / (2.0 * static_cast<double>(n)));
}

Var local_report_loss(std::span<const Var> zr, std::span<const Var> z_sr, std::span<const Var> w_r,
                      const LossConfig& c) {
  const std::size_t n = zr.size();
  require_batch(n);
  if (z_sr.size() != n || w_r.size() != n) throw DimensionError("local_report_loss: batch sizes differ");
  ad::Tape& tape = *zr.front().tape();
  std::vector<Var> per_sample;
  per_sample.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m = zr[i].rows();
    if (z_sr[i].rows() != m || w_r[i].cols() != m || w_r[i].rows() != 1) {
      throw DimensionError("local_report_loss: sample " + std::to_string(i) + " shape mismatch");
    }
    const Var logits = scale(cosine(zr[i], z_sr[i]), 1.0 / c.tau_prime());
    const Var both = log_softmax_rows(logits) + log_softmax_rows(transpose(logits));
    const Var weight = broadcast_cols(transpose(w_r[i]), m);
    per_sample.push_back(sum(weight * tape.constant(Matrix::identity(m)) * both));
  }
  return scale(sum(concat_rows(per_sample)), -1.0 / (2.0 * static_cast<double>(n)));
}

Var uni_gauss(std::span<const Var> z, double tau_prime) {
  require_batch(z.size());
  std::vector<Var> per_sample;
  per_sample.reserve(z.size());
  for (const Var& zi : z) {
    const double k = static_cast<double>(zi.rows());
    const Var logits = scale(cosine(zi, zi), 1.0 / tau_prime);
    const Var lse_all = logsumexp_rows(transpose(logsumexp_rows(logits)));
    per_sample.push_back(add_scalar(lse_all, -std::log(k * k)));
  }
  return scale(sum(concat_rows(per_sample)), 1.0 / static_cast<double>(z.size()));
}

Var uni_xent(std::span<const Var> z, double tau_prime) {
  require_batch(z.size());
  std::vector<Var> per_sample;
  per_sample.reserve(z.size());
  for (const Var& zi : z) {
    const Var logits = scale(cosine(zi, zi), 1.0 / tau_prime);
    per_sample.push_back(scale(sum(logsumexp_rows(logits)), 1.0 / static_cast<double>(zi.rows())));
  }
  return scale(sum(concat_rows(per_sample)), 1.0 / static_cast<double>(z.size()));
}

Var uniformity(std::span<const Var> z, double tau_prime, UniformityVariant variant) {
  return variant == UniformityVariant::Gauss ? uni_gauss(z, tau_prime) : uni_xent(z, tau_prime);
}

}  // namespace traced

double global_loss(const GlobalReps& g, const LossConfig& c) {
  require_batch(g.zg_s.rows());
  g.validate();
  ad::Tape tape;
  return traced::global_loss(tape.constant(g.zg_s), tape.constant(g.zg_r), c).value().scalar();
}

double local_image_loss(const RaggedBatch& zs, const CrossReps& cross, const WeightSet& w,
                        const LossConfig& c) {
  require_batch(zs.size());
  if (cross.z_rs.size() != zs.size() || w.w_s.size() != zs.size()) {
    throw DimensionError("local_image_loss: batch sizes differ");
  }
  ad::Tape tape;
  const auto zs_v = constants(tape, zs.samples());
  const auto zrs_v = constants(tape, cross.z_rs);
  const auto w_v = constants(tape, w.w_s);
  return traced::local_image_loss(zs_v, zrs_v, w_v, tape.constant(w.p_s), c).value().scalar();
}

double local_report_loss(const RaggedBatch& zr, const CrossReps& cross, const WeightSet& w,
                         const LossConfig& c) {
  require_batch(zr.size());
  if (cross.z_sr.size() != zr.size() || w.w_r.size() != zr.size()) {
    throw DimensionError("local_report_loss: batch sizes differ");
  }
  ad::Tape tape;
  const auto zr_v = constants(tape, zr.samples());
  const auto zsr_v = constants(tape, cross.z_sr);
  const auto w_v = constants(tape, w.w_r);
  return traced::local_report_loss(zr_v, zsr_v, w_v, c).value().scalar();
}

double lovt_loss(const LovtInputs& in, const LossConfig& c) {
  return c.gamma() * global_loss(in.global, c) +
         c.mu() * local_image_loss(in.zs, in.cross, in.weights, c) +
         c.nu() * local_report_loss(in.zr, in.cross, in.weights, c);
}

namespace {

double evaluate_uniformity(const RaggedBatch& z, double tau_prime, UniformityVariant v) {
  if (!(tau_prime > 0.0)) throw ConfigError("uniformity: tau_prime must be > 0");
  ad::Tape tape;
  const auto vars = constants(tape, z.samples());
  return traced::uniformity(vars, tau_prime, v).value().scalar();
}

void require_modality(const RaggedBatch& z, Modality m, const char* what) {
  if (z.modality() != m) throw DimensionError(std::string(what) + ": wrong modality");
}

}  // namespace

double uni_gauss(const RaggedBatch& z, double tau_prime) {
  return evaluate_uniformity(z, tau_prime, UniformityVariant::Gauss);
}
double uni_gauss_image(const RaggedBatch& zs, double tau_prime) {
  require_modality(zs, Modality::Image, "uni_gauss_image");
  return uni_gauss(zs, tau_prime);
}
double uni_gauss_report(const RaggedBatch& zr, double tau_prime) {
  require_modality(zr, Modality::Report, "uni_gauss_report");
  return uni_gauss(zr, tau_prime);
}
double uni_xent(const RaggedBatch& z, double tau_prime) {
  return evaluate_uniformity(z, tau_prime, UniformityVariant::Xent);
}
double uni_xent_image(const RaggedBatch& zs, double tau_prime) {
  require_modality(zs, Modality::Image, "uni_xent_image");
  return uni_xent(zs, tau_prime);
}
double uni_xent_report(const RaggedBatch& zr, double tau_prime) {
  require_modality(zr, Modality::Report, "uni_xent_report");
  return uni_xent(zr, tau_prime);
}

double lovt_uni_loss(const GlobalReps& g, const RaggedBatch& zs, const RaggedBatch& zr,
                     const LossConfig& c, UniformityVariant variant) {
  return c.gamma() * global_loss(g, c) +
         c.eta() * (evaluate_uniformity(zs, c.tau_prime(), variant) +
                    evaluate_uniformity(zr, c.tau_prime(), variant));
}

}  // namespace lab
