#pragma once

#include <string_view>
#include <vector>

#include "lab/autodiff.hpp"
#include "lab/losses.hpp"
#include "lab/toy_model.hpp"

namespace lab {

/// Training objectives.
///   global_only     gamma * global
///   lovt            gamma * global + mu * local_image + nu * local_report
///   lovt_uni_gauss  gamma * global + eta * (uni_gauss(z_s) + uni_gauss(z_r))
///   lovt_uni_xent   same with uni_xent
///   uni_only        eta * (uni(z_s) + uni(z_r)), variant chosen separately
enum class Objective { GlobalOnly, Lovt, LovtUniGauss, LovtUniXent, UniOnly };

std::string_view to_string(Objective o);
Objective objective_from_string(std::string_view s);
bool uses_uniformity(Objective o);

struct ObjectiveSpec {
  Objective kind = Objective::GlobalOnly;
  UniformityVariant uni_variant = UniformityVariant::Gauss;  // uni_only only

  /// Variant used for the uniformity terms (and their logged values).
  UniformityVariant variant() const;
};

ad::Var objective_loss(const TracedForward& f, const LossConfig& c, const ObjectiveSpec& spec);

/// Individual terms, each composable through forward().
enum class ZooTerm {
  Global,
  LocalImage,
  LocalReport,
  UniGaussImage,
  UniGaussReport,
  UniXentImage,
  UniXentReport,
  Lovt,
  LovtUniGauss,
  LovtUniXent,
};

std::string_view to_string(ZooTerm t);
const std::vector<ZooTerm>& all_zoo_terms();

ad::Var zoo_term(const TracedForward& f, const LossConfig& c, ZooTerm t);

}  // namespace lab
