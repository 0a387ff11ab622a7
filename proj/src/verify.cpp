#include <algorithm>
#include <cmath>

#include "lab/decomposition.hpp"
#include "lab/errors.hpp"
#include "lab/harness.hpp"

namespace lab {

namespace {

constexpr double kTemps[] = {0.1, 0.2, 1.0};
constexpr double kLambdas[] = {0.0, 0.3, 1.0};

struct Draw {
  RaggedBatch zs{Modality::Image, {}};
  RaggedBatch zr{Modality::Report, {}};
  WeightSet w;
  CrossReps cross;
  GlobalReps global;
  LossConfig config;
};

Matrix stochastic(Rng& rng, std::size_t r, std::size_t c) { return softmax_rows(rng.normal_matrix(r, c), 1.0); }

Matrix positive(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.data()) v = 0.05 + rng.uniform();
  return m;
}

template <class T, std::size_t N>
T pick(Rng& rng, const T (&options)[N]) {
  return options[rng.uniform_int(0, N - 1)];
}

// N <= 4, K <= 6, M_i <= 5, D <= 8; weights normalized or not at random.
Draw random_draw(Rng& rng, std::size_t k_min = 1, std::size_t m_min = 1, std::size_t d_min = 1) {
  const std::size_t n = rng.uniform_int(1, 4);
  const std::size_t k = rng.uniform_int(k_min, 6);
  const std::size_t d = rng.uniform_int(d_min, 8);
  const bool normalized = rng.uniform() < 0.5;
  LossParams p;
  p.tau = pick(rng, kTemps);
  p.tau_prime = pick(rng, kTemps);
  p.lambda = pick(rng, kLambdas);
  std::vector<Matrix> s, r;
  Draw out;
  out.config = LossConfig(p);
  out.w.p_s = normalized ? stochastic(rng, k, k) : positive(rng, k, k);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m = rng.uniform_int(m_min, 5);
    s.push_back(rng.normal_matrix(k, d));
    r.push_back(rng.normal_matrix(m, d));
    out.w.w_s.push_back(normalized ? stochastic(rng, 1, k) : positive(rng, 1, k));
    out.w.w_r.push_back(normalized ? stochastic(rng, 1, m) : positive(rng, 1, m));
    out.w.alpha_rs.push_back(stochastic(rng, k, m));
    out.w.alpha_sr.push_back(stochastic(rng, m, k));
    out.cross.z_rs.push_back(rng.normal_matrix(k, d));
    out.cross.z_sr.push_back(rng.normal_matrix(m, d));
  }
  out.global = GlobalReps{rng.normal_matrix(n, d), rng.normal_matrix(n, d)};
  out.zs = RaggedBatch(Modality::Image, std::move(s));
  out.zr = RaggedBatch(Modality::Report, std::move(r));
  return out;
}

double relative(double reference, double value) {
  return std::abs(reference - value) / std::max(1.0, std::abs(reference));
}

CheckResult upper_check(std::string name, std::size_t trials, double worst, double threshold) {
  return {std::move(name), trials, worst, threshold, worst <= threshold};
}

RaggedBatch unit(const RaggedBatch& b) {
  std::vector<Matrix> out;
  for (const auto& m : b) out.push_back(normalize_rows_unit(m));
  return RaggedBatch(b.modality(), std::move(out));
}

RaggedBatch constant_rows(Rng& rng, const RaggedBatch& shape) {
  std::vector<Matrix> out;
  for (const auto& m : shape) out.push_back(matmul(Matrix(m.rows(), 1, 1.0), normalize_rows_unit(rng.normal_matrix(1, m.cols()))));
  return RaggedBatch(shape.modality(), std::move(out));
}

LossConfig with_temperatures(const LossConfig& c, double tau, double tau_prime) {
  LossParams p = c.params();
  p.tau = tau;
  p.tau_prime = tau_prime;
  return LossConfig(p);
}

WeightSet normalized_weights(Rng& rng, const Draw& d) {
  WeightSet w = d.w;
  w.p_s = stochastic(rng, w.p_s.rows(), w.p_s.cols());
  for (auto& m : w.w_s) m = stochastic(rng, 1, m.cols());
  for (auto& m : w.w_r) m = stochastic(rng, 1, m.cols());
  return w;
}

}  // namespace

std::vector<CheckResult> run_identity_suite(const VerifyOptions& opts) {
  Rng rng(opts.seed);
  std::vector<CheckResult> out;

  {
    constexpr std::size_t trials = 100;
    double g = 0.0, s = 0.0, r = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const Draw d = random_draw(rng);
      DecomposedLoss dg = decompose_global(d.global, d.config);
      if (opts.perturb != 0.0) dg.dist += opts.perturb * rng.normal();
      g = std::max(g, relative(global_loss(d.global, d.config), dg.align + dg.dist));
      const auto ds = decompose_local_image(d.zs, d.cross, d.w, d.config);
      s = std::max(s, relative(local_image_loss(d.zs, d.cross, d.w, d.config), ds.align + ds.dist));
      const auto dr = decompose_local_report(d.zr, d.cross, d.w, d.config);
      r = std::max(r, relative(local_report_loss(d.zr, d.cross, d.w, d.config), dr.align + dr.dist));
    }
    out.push_back(upper_check("recomposition_global", trials, g, 1e-12));
    out.push_back(upper_check("recomposition_local_image", trials, s, 1e-12));
    out.push_back(upper_check("recomposition_local_report", trials, r, 1e-12));
  }

  {
    constexpr std::size_t trials = 50;
    double g = 0.0, s = 0.0, r = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const Draw d = random_draw(rng);
      const GlobalReps pooled = pooled_reps(d.zs, d.zr, d.w);
      const CrossReps attended = attended_reps(d.zs, d.zr, d.w);
      const auto sym = symmetrized_image_weights(d.w);
      g = std::max(g, std::abs(align_rewritten(d.zs, d.zr, xi_weights(XiVariant::Global, d.w, d.config)) -
                               decompose_global(pooled, d.config, Similarity::Dot).align));
      s = std::max(s, std::abs(align_rewritten(d.zs, d.zr, xi_weights(XiVariant::LocalImage, d.w, sym, d.config)) -
                               decompose_local_image(d.zs, attended, d.w, sym, d.config, Similarity::Dot).align));
      r = std::max(r, std::abs(align_rewritten(d.zs, d.zr, xi_weights(XiVariant::LocalReport, d.w, d.config)) -
                               decompose_local_report(d.zr, attended, d.w, d.config, Similarity::Dot).align));
    }
    out.push_back(upper_check("xi_rewrite_global", trials, g, 1e-10));
    out.push_back(upper_check("xi_rewrite_local_image", trials, s, 1e-10));
    out.push_back(upper_check("xi_rewrite_local_report", trials, r, 1e-10));
  }

  {
    constexpr std::size_t trials = 100;
    double worst = 0.0;
    std::size_t rank_one_local = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      const Draw d = random_draw(rng, 2, 2);
      for (const auto& x : xi_weights(XiVariant::Global, d.w, d.config).xi) worst = std::max(worst, rank1_residual(x));
      const auto s = xi_weights(XiVariant::LocalImage, d.w, d.config);
      const auto r = xi_weights(XiVariant::LocalReport, d.w, d.config);
      if (rank1_residual(s.xi[0]) <= 1e-8 || rank1_residual(r.xi[0]) <= 1e-8) ++rank_one_local;
    }
    out.push_back(upper_check("xi_global_rank1", trials, worst, 1e-10));
    // Negative control: count of draws whose local xi looked rank-1.
    out.push_back(upper_check("xi_local_not_separable", trials, static_cast<double>(rank_one_local), 5.0));
  }

  {
    constexpr std::size_t trials = 50;
    double same = 0.0, ratio = 0.0;
    double weakest_control = INFINITY;
    bool clean = true;
    for (std::size_t t = 0; t < trials; ++t) {
      const Draw d = random_draw(rng);
      const WeightSet w = normalized_weights(rng, d);
      const RaggedBatch zs = constant_rows(rng, d.zs);
      const RaggedBatch zr = constant_rows(rng, d.zr);
      const double tau = d.config.tau();
      const auto rep = constant_local_equivalence_check(zs, zr, w, with_temperatures(d.config, tau, tau));
      clean = clean && rep.violations.empty();
      same = std::max(same, rep.max_diff);

      const double tau_prime = tau == 1.0 ? 0.2 : 1.0;
      const auto scaled = constant_local_equivalence_check(zs, zr, w, with_temperatures(d.config, tau, tau_prime));
      // local * tau' == global * tau; compared as products since the sum of dots can vanish.
      ratio = std::max({ratio, std::abs(scaled.local_image * tau_prime - scaled.global * tau),
                        std::abs(scaled.local_report * tau_prime - scaled.global * tau)});

      // Non-constant unit rows need at least two regions or sentences to differ.
      Draw varied = random_draw(rng, 3, 3, 2);
      const WeightSet vw = normalized_weights(rng, varied);
      const auto control = constant_local_equivalence_check(unit(varied.zs), unit(varied.zr), vw,
                                                             with_temperatures(varied.config, tau, tau));
      weakest_control = std::min(weakest_control, control.max_diff);
    }
    out.push_back({"constant_local_equivalence", trials, same, 1e-10, clean && same <= 1e-10});
    out.push_back(upper_check("constant_local_temperature_ratio", trials, ratio, 1e-10));
    out.push_back({"constant_local_negative_control", trials, weakest_control, 1e-4, weakest_control > 1e-4});
  }

  {
    constexpr std::size_t per_temp = 20;
    double worst = 0.0;
    for (double tp : {0.2, 0.5, 1.0})
      for (std::size_t t = 0; t < per_temp; ++t) {
        const Draw d = random_draw(rng);
        const auto f = gauss_offset_identity_check(unit(d.zs), tp);
        worst = std::max(worst, std::abs((f.cosine_form - f.distance_form) - 1.0 / tp));
      }
    out.push_back(upper_check("gauss_offset", 3 * per_temp, worst, 1e-12));
  }

  {
    constexpr std::size_t trials = 50;
    double weakest = INFINITY;
    for (std::size_t t = 0; t < trials; ++t) {
      const Draw d = random_draw(rng, 2, 2, 2);
      const double cos_align = decompose_global(pooled_reps(d.zs, d.zr, d.w), d.config, Similarity::Cosine).align;
      weakest = std::min(weakest, std::abs(cos_align - align_rewritten(d.zs, d.zr, xi_weights(XiVariant::Global, d.w, d.config))));
    }
    out.push_back({"cosine_mode_negative_control", trials, weakest, 1e-6, weakest > 1e-6});
  }

  {
    SyntheticDatasetSpec spec;
    spec.n_total = 2;
    spec.grid_h = 2;
    spec.grid_w = 2;
    spec.m_min = 1;
    spec.m_max = 3;
    spec.d_latent = 3;
    spec.d_input = 4;
    spec.seed = RngSeed{opts.seed.value + 1};
    ModelConfig model;
    model.d_input = 4;
    model.d_hidden = 5;
    model.d_rep = 4;
    model.grid_h = 2;
    model.grid_w = 2;
    model.cross_mode = CrossMode::Full;
    const auto data = generate_dataset(spec);
    const auto params = init_params(model, data, RngSeed{opts.seed.value + 2});
    LossParams lp;
    lp.tau = 0.5;
    lp.tau_prime = 0.5;
    const LossConfig lc(lp);
    const ModelBatch batch = full_batch(data);
    double worst = 0.0;
    for (ZooTerm term : all_zoo_terms()) {
      const ad::LossBuilder f = [&](ad::Tape& tape, const ad::LeafMap& p) {
        return zoo_term(forward(tape, p, model, batch), lc, term);
      };
      worst = std::max(worst, ad::max_relative_error(ad::grad(f, params).gradients, ad::finite_diff(f, params, 1e-5)));
    }
    out.push_back(upper_check("gradient_through_forward", all_zoo_terms().size(), worst, 1e-5));
  }
  return out;
}

std::string verify_csv(const std::vector<CheckResult>& checks) {
  std::string out = "check,trials,max_error,status\n";
  for (const auto& c : checks)
    out += c.name + "," + std::to_string(c.trials) + "," + format_double(c.max_error) + "," + (c.passed ? "pass" : "fail") + "\n";
  return out;
}

}  // namespace lab
