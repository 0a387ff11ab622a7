#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "lab/autodiff.hpp"
#include "lab/matrix.hpp"
#include "lab/numeric.hpp"

namespace lab {

/// Scalar hyperparameters of the loss family.
///
/// tau and tau_prime are the global and local temperatures, lambda weighs the
/// two NTXent directions of the global loss, gamma/mu/nu weigh the global,
/// local-image and local-report terms, and eta weighs the uniformity terms.
/// Only eta and tau_prime have reference values (see uniformity_defaults);
/// lambda = 0.5 and gamma = mu = nu = 1 are placeholders.
struct LossParams {
  double tau = 0.1;
  double tau_prime = 0.2;
  double lambda = 0.5;
  double gamma = 1.0;
  double mu = 1.0;
  double nu = 1.0;
  double eta = 0.25;
};

/// Validated LossParams. Construction throws ConfigError on out-of-range values.
class LossConfig {
 public:
  LossConfig() : LossConfig(LossParams{}) {}
  explicit LossConfig(const LossParams& params);

  const LossParams& params() const noexcept { return params_; }
  double tau() const noexcept { return params_.tau; }
  double tau_prime() const noexcept { return params_.tau_prime; }
  double lambda() const noexcept { return params_.lambda; }
  double gamma() const noexcept { return params_.gamma; }
  double mu() const noexcept { return params_.mu; }
  double nu() const noexcept { return params_.nu; }
  double eta() const noexcept { return params_.eta; }

 private:
  LossParams params_;
};

/// Per-sample global representations, one row per sample.
struct GlobalReps {
  Matrix zg_s;
  Matrix zg_r;

  void validate() const;
};

/// Cross-modality representations: z_rs[i] is KxD (report attended onto image
/// regions), z_sr[i] is M_i x D (image attended onto sentences).
struct CrossReps {
  std::vector<Matrix> z_rs;
  std::vector<Matrix> z_sr;
};

/// Local weights, shared positiveness matrix and attention matrices.
struct WeightSet {
  enum class Mode { General, Normalized };

  std::vector<Matrix> w_s;  // 1xK per sample
  std::vector<Matrix> w_r;  // 1xM_i per sample
  Matrix p_s;               // KxK, shared across samples
  std::vector<Matrix> alpha_rs;  // KxM_i per sample, row-stochastic (optional)
  std::vector<Matrix> alpha_sr;  // M_i xK per sample, row-stochastic (optional)

  /// Throws ConfigError on negative entries, non-stochastic attention rows, or
  /// (Normalized mode) weights / positiveness rows that do not sum to 1.
  void validate(Mode mode = Mode::General) const;
  bool has_attention() const noexcept { return !alpha_rs.empty() && !alpha_sr.empty(); }

  /// Uniform w (1/K, 1/M_i) and identity positiveness; no attention.
  static WeightSet uniform(const RaggedBatch& zs, const RaggedBatch& zr);
};

enum class UniformityVariant { Gauss, Xent };

std::string_view to_string(UniformityVariant v);
UniformityVariant uniformity_variant_from_string(std::string_view s);

/// Reference per-variant hyperparameters: the default eta, the two selected
/// local temperatures, and the tuning grids.
struct UniformityDefaults {
  double eta;
  std::vector<double> selected_tau_primes;
  std::vector<double> sweep_tau_primes;
  std::vector<double> sweep_etas;
};

UniformityDefaults uniformity_defaults(UniformityVariant v);

double global_loss(const GlobalReps& g, const LossConfig& c);
double local_image_loss(const RaggedBatch& zs, const CrossReps& cross, const WeightSet& w,
                        const LossConfig& c);
double local_report_loss(const RaggedBatch& zr, const CrossReps& cross, const WeightSet& w,
                         const LossConfig& c);

struct LovtInputs {
  const GlobalReps& global;
  const RaggedBatch& zs;
  const RaggedBatch& zr;
  const CrossReps& cross;
  const WeightSet& weights;
};

/// gamma * global + mu * local_image + nu * local_report.
double lovt_loss(const LovtInputs& in, const LossConfig& c);

double uni_gauss(const RaggedBatch& z, double tau_prime);
double uni_gauss_image(const RaggedBatch& zs, double tau_prime);
double uni_gauss_report(const RaggedBatch& zr, double tau_prime);
double uni_xent(const RaggedBatch& z, double tau_prime);
double uni_xent_image(const RaggedBatch& zs, double tau_prime);
double uni_xent_report(const RaggedBatch& zr, double tau_prime);

/// gamma * global + eta * (uni_image + uni_report) for the chosen variant.
double lovt_uni_loss(const GlobalReps& g, const RaggedBatch& zs, const RaggedBatch& zr,
                     const LossConfig& c, UniformityVariant variant);

/// The same losses recorded on an autodiff tape. Per-sample arguments are
/// spans with one Var per sample.
namespace traced {

using ad::Var;

Var global_loss(Var zg_s, Var zg_r, const LossConfig& c);
Var local_image_loss(std::span<const Var> zs, std::span<const Var> z_rs, std::span<const Var> w_s,
                     Var p_s, const LossConfig& c);
Var local_report_loss(std::span<const Var> zr, std::span<const Var> z_sr,
                      std::span<const Var> w_r, const LossConfig& c);
Var uni_gauss(std::span<const Var> z, double tau_prime);
Var uni_xent(std::span<const Var> z, double tau_prime);
Var uniformity(std::span<const Var> z, double tau_prime, UniformityVariant variant);

}  // namespace traced

}  // namespace lab
