#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "lab/matrix.hpp"

namespace lab {

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// Cosine similarity, clamped to [-1, 1]. Throws DegenerateVectorError on a
/// zero-norm argument.
double cosine(std::span<const double> a, std::span<const double> b);

/// log(sum(exp(v))) with max-shift. Throws DimensionError on empty input.
double logsumexp(std::span<const double> v);

/// Row-wise softmax of m / temperature.
Matrix softmax_rows(const Matrix& m, double temperature);

Matrix normalize_rows_unit(const Matrix& m);

/// Pairwise row cosines: out(i, j) = cosine(a.row(i), b.row(j)).
Matrix cosine_matrix(const Matrix& a, const Matrix& b);

enum class Modality { Image, Report };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// Per-sample local representations of one modality. Images share K rows per
/// sample; reports have M_i >= 1 rows. All samples share the column count D.
class RaggedBatch {
 public:
  RaggedBatch(Modality modality, std::vector<Matrix> samples);

  Modality modality() const noexcept { return modality_; }
  std::size_t size() const noexcept { return samples_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const Matrix& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<Matrix>& samples() const noexcept { return samples_; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

  /// K for image batches; throws for report batches with unequal M_i.
  std::size_t rows_per_sample() const;

  friend bool operator==(const RaggedBatch&, const RaggedBatch&) = default;

 private:
  Modality modality_;
  std::vector<Matrix> samples_;
  std::size_t dim_ = 0;
};

struct RngSeed {
  std::uint64_t value = 0;
};

/// Seeded generator. Identical seeds and call sequences give identical draws.
class Rng {
 public:
  explicit Rng(RngSeed seed) : engine_(seed.value) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [lo, hi].
  std::size_t uniform_int(std::size_t lo, std::size_t hi);
  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0);
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace lab
