#pragma once

#include <vector>

#include "lab/losses.hpp"
#include "lab/numeric.hpp"

namespace labtest {

using namespace lab;

struct Batch {
  RaggedBatch zs;
  RaggedBatch zr;
  WeightSet w;
};

inline Matrix stochastic_rows(Rng& rng, std::size_t r, std::size_t c) {
  return softmax_rows(rng.normal_matrix(r, c), 1.0);
}

inline Matrix positive_row(Rng& rng, std::size_t c) {
  Matrix m(1, c);
  for (std::size_t j = 0; j < c; ++j) m(0, j) = 0.05 + rng.uniform();
  return m;
}

inline Matrix unit_rows(Matrix m) { return normalize_rows_unit(m); }

// Random locals with attention. normalized=false draws unnormalized w and p.
inline Batch random_batch(Rng& rng, std::size_t n, std::size_t k, std::size_t m_max, std::size_t d,
                          bool normalized = true) {
  std::vector<Matrix> s, r;
  WeightSet w;
  w.p_s = normalized ? stochastic_rows(rng, k, k) : rng.normal_matrix(k, k);
  if (!normalized)
    for (auto& v : w.p_s.data()) v = std::abs(v);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m = rng.uniform_int(1, m_max);
    s.push_back(rng.normal_matrix(k, d));
    r.push_back(rng.normal_matrix(m, d));
    w.w_s.push_back(normalized ? stochastic_rows(rng, 1, k) : positive_row(rng, k));
    w.w_r.push_back(normalized ? stochastic_rows(rng, 1, m) : positive_row(rng, m));
    w.alpha_rs.push_back(stochastic_rows(rng, k, m));
    w.alpha_sr.push_back(stochastic_rows(rng, m, k));
  }
  return {RaggedBatch(Modality::Image, std::move(s)), RaggedBatch(Modality::Report, std::move(r)), std::move(w)};
}

inline CrossReps random_cross(Rng& rng, const Batch& b) {
  CrossReps c;
  for (std::size_t i = 0; i < b.zs.size(); ++i) {
    c.z_rs.push_back(rng.normal_matrix(b.zs[i].rows(), b.zs.dim()));
    c.z_sr.push_back(rng.normal_matrix(b.zr[i].rows(), b.zr.dim()));
  }
  return c;
}

inline LossConfig make_config(double tau, double tau_prime, double lambda = 0.5) {
  LossParams p;
  p.tau = tau;
  p.tau_prime = tau_prime;
  p.lambda = lambda;
  return LossConfig(p);
}

}  // namespace labtest
