#include "lab/decomposition.hpp"

#include <algorithm>
#include <cmath>

#include "lab/errors.hpp"

namespace lab {

namespace {

constexpr double kUnitTol = 1e-8;

double similarity(std::span<const double> a, std::span<const double> b, Similarity sim) {
  return sim == Similarity::Cosine ? cosine(a, b) : dot(a, b);
}

Matrix similarity_matrix(const Matrix& a, const Matrix& b, Similarity sim) {
  if (a.cols() != b.cols()) throw DimensionError("similarity_matrix: column counts differ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = similarity(a.row(i), b.row(j), sim);
  return out;
}

double row_lse(const Matrix& s, std::size_t r, double inv_t) {
  std::vector<double> v(s.cols());
  for (std::size_t j = 0; j < s.cols(); ++j) v[j] = s(r, j) * inv_t;
  return logsumexp(v);
}

double col_lse(const Matrix& s, std::size_t c, double inv_t) {
  std::vector<double> v(s.rows());
  for (std::size_t j = 0; j < s.rows(); ++j) v[j] = s(j, c) * inv_t;
  return logsumexp(v);
}

void require_batch(std::size_t n, const char* what) {
  if (n == 0) throw EmptyBatchError(std::string(what) + ": empty batch");
}

double row_sum(const Matrix& m, std::size_t r) {
  double s = 0.0;
  for (double v : m.row(r)) s += v;
  return s;
}

}  // namespace

std::string_view to_string(Similarity s) { return s == Similarity::Cosine ? "cosine" : "dot"; }

std::string_view to_string(XiVariant v) {
  switch (v) {
    case XiVariant::Global: return "global";
    case XiVariant::LocalImage: return "local_image";
    case XiVariant::LocalReport: return "local_report";
  }
  return "?";
}

DecomposedLoss decompose_global(const GlobalReps& g, const LossConfig& c, Similarity sim) {
  const std::size_t n = g.zg_s.rows();
  require_batch(n, "decompose_global");
  g.validate();
  const Matrix s = similarity_matrix(g.zg_s, g.zg_r, sim);
  const double inv_t = 1.0 / c.tau();
  const double lambda = c.lambda();
  DecomposedLoss out;
  for (std::size_t i = 0; i < n; ++i) {
    const double lse_sr = row_lse(s, i, inv_t);
    const double lse_rs = col_lse(s, i, inv_t);
    const double pos = s(i, i) * inv_t;
    out.align -= pos;
    out.dist += lambda * lse_sr + (1.0 - lambda) * lse_rs;
    out.total += lambda * (lse_sr - pos) + (1.0 - lambda) * (lse_rs - pos);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.align *= inv_n;
  out.dist *= inv_n;
  out.total *= inv_n;
  return out;
}

std::vector<Matrix> symmetrized_image_weights(const WeightSet& w) {
  const std::size_t k = w.p_s.rows();
  std::vector<Matrix> out;
  out.reserve(w.w_s.size());
  for (const auto& ws : w.w_s) {
    if (ws.cols() != k) throw DimensionError("symmetrized_image_weights: w_s must be 1xK");
    Matrix sym(k, k);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) sym(a, b) = 0.5 * (ws(0, a) * w.p_s(a, b) + ws(0, b) * w.p_s(b, a));
    out.push_back(std::move(sym));
  }
  return out;
}

DecomposedLoss decompose_local_image(const RaggedBatch& zs, const CrossReps& cross, const WeightSet& w,
                                     const LossConfig& c, Similarity sim) {
  return decompose_local_image(zs, cross, w, symmetrized_image_weights(w), c, sim);
}

// The distribution prior carries the row mass of p (sum_l p_kl) so the split is
// exact for any nonnegative p, not only row-stochastic ones.
DecomposedLoss decompose_local_image(const RaggedBatch& zs, const CrossReps& cross, const WeightSet& w,
                                     const std::vector<Matrix>& sym, const LossConfig& c, Similarity sim) {
  const std::size_t n = zs.size();
  require_batch(n, "decompose_local_image");
  if (cross.z_rs.size() != n || w.w_s.size() != n || sym.size() != n) {
    throw DimensionError("decompose_local_image: batch sizes differ");
  }
  const double inv_t = 1.0 / c.tau_prime();
  DecomposedLoss out;
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix s = similarity_matrix(zs[i], cross.z_rs[i], sim);
    const std::size_t k = s.rows();
    if (s.cols() != k || w.p_s.rows() != k || sym[i].rows() != k) {
      throw DimensionError("decompose_local_image: z_rs and p_s must be KxD and KxK");
    }
    for (std::size_t a = 0; a < k; ++a) {
      const double lse1 = row_lse(s, a, inv_t);
      const double lse2 = col_lse(s, a, inv_t);
      const double wk = w.w_s[i](0, a);
      out.dist += wk * row_sum(w.p_s, a) * (lse1 + lse2);
      for (std::size_t b = 0; b < k; ++b) {
        out.align -= 2.0 * sym[i](a, b) * s(a, b) * inv_t;
        out.total += wk * w.p_s(a, b) * ((lse1 - s(a, b) * inv_t) + (lse2 - s(b, a) * inv_t));
      }
    }
  }
  const double scale_2n = 1.0 / (2.0 * static_cast<double>(n));
  out.align *= scale_2n;
  out.dist *= scale_2n;
  out.total *= scale_2n;
  return out;
}

DecomposedLoss decompose_local_report(const RaggedBatch& zr, const CrossReps& cross, const WeightSet& w,
                                      const LossConfig& c, Similarity sim) {
  const std::size_t n = zr.size();
  require_batch(n, "decompose_local_report");
  if (cross.z_sr.size() != n || w.w_r.size() != n) throw DimensionError("decompose_local_report: batch sizes differ");
  const double inv_t = 1.0 / c.tau_prime();
  DecomposedLoss out;
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix s = similarity_matrix(zr[i], cross.z_sr[i], sim);
    const std::size_t m = s.rows();
    if (s.cols() != m || w.w_r[i].cols() != m) throw DimensionError("decompose_local_report: z_sr must be M_ixD");
    for (std::size_t a = 0; a < m; ++a) {
      const double lse1 = row_lse(s, a, inv_t);
      const double lse2 = col_lse(s, a, inv_t);
      const double pos = s(a, a) * inv_t;
      const double wm = w.w_r[i](0, a);
      out.align -= 2.0 * wm * pos;
      out.dist += wm * (lse1 + lse2);
      out.total += wm * ((lse1 - pos) + (lse2 - pos));
    }
  }
  const double scale_2n = 1.0 / (2.0 * static_cast<double>(n));
  out.align *= scale_2n;
  out.dist *= scale_2n;
  out.total *= scale_2n;
  return out;
}

XiWeights xi_weights(XiVariant variant, const WeightSet& w, const LossConfig& c) {
  if (variant == XiVariant::LocalImage) return xi_weights(variant, w, symmetrized_image_weights(w), c);
  return xi_weights(variant, w, {}, c);
}

XiWeights xi_weights(XiVariant variant, const WeightSet& w, const std::vector<Matrix>& sym,
                     const LossConfig& c) {
  const std::size_t n = w.w_s.size();
  if (w.w_r.size() != n) throw DimensionError("xi_weights: w_s and w_r cover different batch sizes");
  if (variant != XiVariant::Global && !w.has_attention()) {
    throw ConfigError(std::string("xi_weights: variant ") + std::string(to_string(variant)) + " needs attention matrices");
  }
  XiWeights out{variant, {}};
  out.xi.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix& ws = w.w_s[i];
    const Matrix& wr = w.w_r[i];
    const std::size_t k = ws.cols();
    const std::size_t m = wr.cols();
    Matrix xi(k, m);
    switch (variant) {
      case XiVariant::Global:
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < m; ++b) xi(a, b) = ws(0, a) * wr(0, b) / c.tau();
        break;
      case XiVariant::LocalImage: {
        if (sym.size() != n) throw DimensionError("xi_weights: symmetrized weights cover a different batch");
        const Matrix& alpha = w.alpha_rs[i];
        xi = scale(matmul(sym[i], alpha), 1.0 / c.tau_prime());
        break;
      }
      case XiVariant::LocalReport: {
        const Matrix& alpha = w.alpha_sr[i];
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < m; ++b) xi(a, b) = wr(0, b) * alpha(b, a) / c.tau_prime();
        break;
      }
    }
    out.xi.push_back(std::move(xi));
  }
  return out;
}

double align_rewritten(const RaggedBatch& zs, const RaggedBatch& zr, const XiWeights& xi) {
  const std::size_t n = zs.size();
  require_batch(n, "align_rewritten");
  if (zr.size() != n || xi.xi.size() != n) throw DimensionError("align_rewritten: batch sizes differ");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix& x = xi.xi[i];
    if (x.rows() != zs[i].rows() || x.cols() != zr[i].rows()) throw DimensionError("align_rewritten: xi must be KxM_i");
    for (std::size_t a = 0; a < x.rows(); ++a)
      for (std::size_t b = 0; b < x.cols(); ++b) total += x(a, b) * dot(zs[i].row(a), zr[i].row(b));
  }
  return -total / static_cast<double>(n);
}

GlobalReps pooled_reps(const RaggedBatch& zs, const RaggedBatch& zr, const WeightSet& w) {
  const std::size_t n = zs.size();
  if (zr.size() != n || w.w_s.size() != n || w.w_r.size() != n) throw DimensionError("pooled_reps: batch sizes differ");
  GlobalReps g{Matrix(n, zs.dim()), Matrix(n, zr.dim())};
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix s = matmul(w.w_s[i], zs[i]);
    const Matrix r = matmul(w.w_r[i], zr[i]);
    std::copy(s.data().begin(), s.data().end(), g.zg_s.row(i).begin());
    std::copy(r.data().begin(), r.data().end(), g.zg_r.row(i).begin());
  }
  return g;
}

CrossReps attended_reps(const RaggedBatch& zs, const RaggedBatch& zr, const WeightSet& w) {
  if (!w.has_attention()) throw ConfigError("attended_reps: attention matrices missing");
  const std::size_t n = zs.size();
  if (zr.size() != n || w.alpha_rs.size() != n) throw DimensionError("attended_reps: batch sizes differ");
  CrossReps out;
  for (std::size_t i = 0; i < n; ++i) {
    out.z_rs.push_back(matmul(w.alpha_rs[i], zr[i]));
    out.z_sr.push_back(matmul(w.alpha_sr[i], zs[i]));
  }
  return out;
}

double rank1_residual(const Matrix& x) {
  const double peak = max_abs(x);
  if (peak == 0.0) return 0.0;
  std::vector<double> r(x.rows(), 0.0);
  std::vector<double> col(x.cols(), 0.0);
  double total = 0.0, mass = 0.0;
  for (std::size_t a = 0; a < x.rows(); ++a)
    for (std::size_t b = 0; b < x.cols(); ++b) {
      r[a] += x(a, b);
      col[b] += x(a, b);
      total += x(a, b);
      mass += std::abs(x(a, b));
    }
  // Marginals need a grand total well away from zero (mixed signs); use the
  // row and column through the largest entry instead.
  if (std::abs(total) <= 1e-8 * mass) {
    std::size_t pa = 0, pb = 0;
    for (std::size_t a = 0; a < x.rows(); ++a)
      for (std::size_t b = 0; b < x.cols(); ++b)
        if (std::abs(x(a, b)) == peak) { pa = a; pb = b; }
    for (std::size_t a = 0; a < x.rows(); ++a) r[a] = x(a, pb);
    for (std::size_t b = 0; b < x.cols(); ++b) col[b] = x(pa, b);
    total = x(pa, pb);
  }
  double worst = 0.0;
  for (std::size_t a = 0; a < x.rows(); ++a)
    for (std::size_t b = 0; b < x.cols(); ++b) worst = std::max(worst, std::abs(x(a, b) - r[a] * col[b] / total));
  return worst / peak;
}

EquivalenceReport constant_local_equivalence_check(const RaggedBatch& zs, const RaggedBatch& zr,
                                                   const WeightSet& w, const LossConfig& c, double tolerance) {
  EquivalenceReport rep;
  auto note = [&](const std::string& s) { rep.violations.push_back(s); };
  if (c.tau() != c.tau_prime()) note("tau != tau_prime");
  try {
    w.validate(WeightSet::Mode::Normalized);
  } catch (const Error& e) {
    note(std::string("weights not normalized: ") + e.what());
  }
  if (!w.has_attention()) throw ConfigError("constant_local_equivalence_check: attention matrices missing");
  for (const RaggedBatch* b : {&zs, &zr}) {
    bool constant = true, unit = true;
    for (const auto& m : *b)
      for (std::size_t r = 0; r < m.rows(); ++r) {
        if (std::abs(norm(m.row(r)) - 1.0) > kUnitTol) unit = false;
        for (std::size_t d = 0; d < m.cols(); ++d)
          if (m(r, d) != m(0, d)) constant = false;
      }
    const std::string which = b->modality() == Modality::Image ? "image" : "report";
    if (!constant) note(which + " locals are not constant within a sample");
    if (!unit) note(which + " locals are not unit norm");
  }
  rep.global = align_rewritten(zs, zr, xi_weights(XiVariant::Global, w, c));
  rep.local_image = align_rewritten(zs, zr, xi_weights(XiVariant::LocalImage, w, c));
  rep.local_report = align_rewritten(zs, zr, xi_weights(XiVariant::LocalReport, w, c));
  rep.max_diff = std::max({std::abs(rep.global - rep.local_image), std::abs(rep.global - rep.local_report),
                           std::abs(rep.local_image - rep.local_report)});
  rep.passed = rep.violations.empty() && rep.max_diff <= tolerance;
  return rep;
}

GaussForms gauss_offset_identity_check(const RaggedBatch& z, double tau_prime) {
  require_batch(z.size(), "gauss_offset_identity_check");
  if (!(tau_prime > 0.0)) throw ConfigError("gauss_offset_identity_check: tau_prime must be > 0");
  GaussForms out;
  for (const auto& m : z) {
    for (std::size_t r = 0; r < m.rows(); ++r)
      if (std::abs(norm(m.row(r)) - 1.0) > kUnitTol) {
        throw PreconditionError("gauss_offset_identity_check: row " + std::to_string(r) + " is not unit norm");
      }
    const std::size_t k = m.rows();
    std::vector<double> dist_terms, cos_terms;
    dist_terms.reserve(k * k);
    cos_terms.reserve(k * k);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        double sq = 0.0;
        for (std::size_t d = 0; d < m.cols(); ++d) {
          const double diff = m(a, d) - m(b, d);
          sq += diff * diff;
        }
        dist_terms.push_back(-sq / (2.0 * tau_prime));
        cos_terms.push_back(cosine(m.row(a), m.row(b)) / tau_prime);
      }
    const double log_k2 = std::log(static_cast<double>(k * k));
    out.distance_form += logsumexp(dist_terms) - log_k2;
    out.cosine_form += logsumexp(cos_terms) - log_k2;
  }
  const double inv_n = 1.0 / static_cast<double>(z.size());
  out.distance_form *= inv_n;
  out.cosine_form *= inv_n;
  return out;
}

}  // namespace lab
