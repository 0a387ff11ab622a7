#include "lab/objective.hpp"

#include <string>

#include "lab/errors.hpp"

namespace lab {

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::GlobalOnly: return "global_only";
    case Objective::Lovt: return "lovt";
    case Objective::LovtUniGauss: return "lovt_uni_gauss";
    case Objective::LovtUniXent: return "lovt_uni_xent";
    case Objective::UniOnly: return "uni_only";
  }
  return "?";
}

Objective objective_from_string(std::string_view s) {
  for (Objective o : {Objective::GlobalOnly, Objective::Lovt, Objective::LovtUniGauss, Objective::LovtUniXent,
                      Objective::UniOnly})
    if (to_string(o) == s) return o;
  throw ConfigError("unknown objective '" + std::string(s) + "'");
}

bool uses_uniformity(Objective o) {
  return o == Objective::LovtUniGauss || o == Objective::LovtUniXent || o == Objective::UniOnly;
}

UniformityVariant ObjectiveSpec::variant() const {
  if (kind == Objective::LovtUniXent) return UniformityVariant::Xent;
  if (kind == Objective::UniOnly) return uni_variant;
  return UniformityVariant::Gauss;
}

namespace {

ad::Var global_term(const TracedForward& f, const LossConfig& c) { return traced::global_loss(f.zbar_s, f.zbar_r, c); }

ad::Var local_image_term(const TracedForward& f, const LossConfig& c) {
  return traced::local_image_loss(f.z_s, f.z_rs, f.w_s, f.p_s, c);
}

ad::Var local_report_term(const TracedForward& f, const LossConfig& c) {
  return traced::local_report_loss(f.z_r, f.z_sr, f.w_r, c);
}

ad::Var uni_pair(const TracedForward& f, const LossConfig& c, UniformityVariant v) {
  return traced::uniformity(f.z_s, c.tau_prime(), v) + traced::uniformity(f.z_r, c.tau_prime(), v);
}

}  // namespace

ad::Var objective_loss(const TracedForward& f, const LossConfig& c, const ObjectiveSpec& spec) {
  switch (spec.kind) {
    case Objective::GlobalOnly: return ad::scale(global_term(f, c), c.gamma());
    case Objective::Lovt: return zoo_term(f, c, ZooTerm::Lovt);
    case Objective::LovtUniGauss: return zoo_term(f, c, ZooTerm::LovtUniGauss);
    case Objective::LovtUniXent: return zoo_term(f, c, ZooTerm::LovtUniXent);
    case Objective::UniOnly: return ad::scale(uni_pair(f, c, spec.uni_variant), c.eta());
  }
  throw ConfigError("objective_loss: unknown objective");
}

std::string_view to_string(ZooTerm t) {
  switch (t) {
    case ZooTerm::Global: return "global";
    case ZooTerm::LocalImage: return "local_image";
    case ZooTerm::LocalReport: return "local_report";
    case ZooTerm::UniGaussImage: return "uni_gauss_image";
    case ZooTerm::UniGaussReport: return "uni_gauss_report";
    case ZooTerm::UniXentImage: return "uni_xent_image";
    case ZooTerm::UniXentReport: return "uni_xent_report";
    case ZooTerm::Lovt: return "lovt";
    case ZooTerm::LovtUniGauss: return "lovt_uni_gauss";
    case ZooTerm::LovtUniXent: return "lovt_uni_xent";
  }
  return "?";
}

const std::vector<ZooTerm>& all_zoo_terms() {
  static const std::vector<ZooTerm> terms{
      ZooTerm::Global,        ZooTerm::LocalImage,     ZooTerm::LocalReport,  ZooTerm::UniGaussImage,
      ZooTerm::UniGaussReport, ZooTerm::UniXentImage, ZooTerm::UniXentReport, ZooTerm::Lovt,
      ZooTerm::LovtUniGauss,  ZooTerm::LovtUniXent,
  };
  return terms;
}

ad::Var zoo_term(const TracedForward& f, const LossConfig& c, ZooTerm t) {
  switch (t) {
    case ZooTerm::Global: return global_term(f, c);
    case ZooTerm::LocalImage: return local_image_term(f, c);
    case ZooTerm::LocalReport: return local_report_term(f, c);
    case ZooTerm::UniGaussImage: return traced::uni_gauss(f.z_s, c.tau_prime());
    case ZooTerm::UniGaussReport: return traced::uni_gauss(f.z_r, c.tau_prime());
    case ZooTerm::UniXentImage: return traced::uni_xent(f.z_s, c.tau_prime());
    case ZooTerm::UniXentReport: return traced::uni_xent(f.z_r, c.tau_prime());
    case ZooTerm::Lovt:
      return ad::scale(global_term(f, c), c.gamma()) + ad::scale(local_image_term(f, c), c.mu()) +
             ad::scale(local_report_term(f, c), c.nu());
    case ZooTerm::LovtUniGauss:
      return ad::scale(global_term(f, c), c.gamma()) + ad::scale(uni_pair(f, c, UniformityVariant::Gauss), c.eta());
    case ZooTerm::LovtUniXent:
      return ad::scale(global_term(f, c), c.gamma()) + ad::scale(uni_pair(f, c, UniformityVariant::Xent), c.eta());
  }
  throw ConfigError("zoo_term: unknown term");
}

}  // namespace lab
