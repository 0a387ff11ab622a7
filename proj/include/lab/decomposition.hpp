#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "lab/losses.hpp"
#include "lab/matrix.hpp"
#include "lab/numeric.hpp"

namespace lab {

/// Cosine is the loss as defined; Dot drops the normalization so every
/// similarity is a plain dot product.
enum class Similarity { Cosine, Dot };

std::string_view to_string(Similarity s);

/// align + dist split of one contrastive loss. total is evaluated directly
/// from the loss formula, not as the sum of the parts.
struct DecomposedLoss {
  double align = 0.0;
  double dist = 0.0;
  double total = 0.0;
};

DecomposedLoss decompose_global(const GlobalReps& g, const LossConfig& c,
                                Similarity sim = Similarity::Cosine);

/// (w_k p_kl + w_l p_lk) / 2 per sample. Compute once and pass to both
/// decompose_local_image and xi_weights when both are needed.
std::vector<Matrix> symmetrized_image_weights(const WeightSet& w);

DecomposedLoss decompose_local_image(const RaggedBatch& zs, const CrossReps& cross, const WeightSet& w,
                                     const LossConfig& c, Similarity sim = Similarity::Cosine);
DecomposedLoss decompose_local_image(const RaggedBatch& zs, const CrossReps& cross, const WeightSet& w,
                                     const std::vector<Matrix>& sym, const LossConfig& c,
                                     Similarity sim = Similarity::Cosine);

DecomposedLoss decompose_local_report(const RaggedBatch& zr, const CrossReps& cross, const WeightSet& w,
                                      const LossConfig& c, Similarity sim = Similarity::Cosine);

enum class XiVariant { Global, LocalImage, LocalReport };

std::string_view to_string(XiVariant v);

/// Per-sample KxM_i coefficients of the region/sentence dot products.
struct XiWeights {
  XiVariant variant = XiVariant::Global;
  std::vector<Matrix> xi;
};

/// Throws ConfigError when a local variant is requested without attention.
XiWeights xi_weights(XiVariant variant, const WeightSet& w, const LossConfig& c);
XiWeights xi_weights(XiVariant variant, const WeightSet& w, const std::vector<Matrix>& sym,
                     const LossConfig& c);

/// -(1/N) sum_i sum_k sum_m xi_ikm dot(zs_ik, zr_im).
double align_rewritten(const RaggedBatch& zs, const RaggedBatch& zr, const XiWeights& xi);

/// zg_s_i = sum_k w_k zs_ik and zg_r_i = sum_m w_m zr_im.
GlobalReps pooled_reps(const RaggedBatch& zs, const RaggedBatch& zr, const WeightSet& w);

/// z_rs_i = alpha_rs_i zr_i and z_sr_i = alpha_sr_i zs_i.
CrossReps attended_reps(const RaggedBatch& zs, const RaggedBatch& zr, const WeightSet& w);

/// max |X - r c^T / total| / max |X|, where r and c are the row and column
/// sums. Zero for any outer product; 0 for the zero matrix.
double rank1_residual(const Matrix& x);

struct EquivalenceReport {
  double global = 0.0;
  double local_image = 0.0;
  double local_report = 0.0;
  double max_diff = 0.0;
  std::vector<std::string> violations;
  bool passed = false;
};

/// The three rewritten alignments on one batch. Unmet preconditions
/// (constant rows, unit rows, normalized weights, attention present, tau == tau')
/// are listed in the report and make it fail; the values are still computed.
EquivalenceReport constant_local_equivalence_check(const RaggedBatch& zs, const RaggedBatch& zr,
                                                   const WeightSet& w, const LossConfig& c,
                                                   double tolerance = 1e-10);

struct GaussForms {
  double distance_form = 0.0;
  double cosine_form = 0.0;
};

/// uni-gauss written with squared distances, exp(-|z - z'|^2 / (2 tau')), next
/// to the cosine form. Rows must be unit norm within 1e-8 (PreconditionError).
GaussForms gauss_offset_identity_check(const RaggedBatch& z, double tau_prime);

}  // namespace lab
