#include "lab/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lab/errors.hpp"

namespace lab {

namespace {

double require_finite(double v, const char* op) {
  if (!std::isfinite(v)) throw EvaluationError(std::string(op) + ": non-finite result");
  return v;
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return require_finite(acc, "dot");
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const double> a, std::span<const double> b) {
  const double ab = dot(a, b);
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw DegenerateVectorError("cosine: zero-norm vector");
  return std::clamp(ab / (na * nb), -1.0, 1.0);
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw DimensionError("logsumexp: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return require_finite(m + std::log(acc), "logsumexp");
}

Matrix softmax_rows(const Matrix& m, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("softmax_rows: temperature must be > 0");
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto in = m.row(r);
    auto o = out.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : in) mx = std::max(mx, x / temperature);
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] / temperature - mx);
      total += o[c];
    }
    for (double& x : o) x /= total;
  }
  if (!out.all_finite()) throw EvaluationError("softmax_rows: non-finite result");
  return out;
}

Matrix normalize_rows_unit(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = norm(m.row(r));
    if (n == 0.0) throw DegenerateVectorError("normalize_rows_unit: zero row " + std::to_string(r));
    for (double& x : out.row(r)) x /= n;
  }
  return out;
}

Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("cosine_matrix: column mismatch");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = cosine(a.row(i), b.row(j));
  return out;
}

std::string_view to_string(Modality m) { return m == Modality::Image ? "image" : "report"; }

Modality modality_from_string(std::string_view s) {
  if (s == "image") return Modality::Image;
  if (s == "report") return Modality::Report;
  throw ParseError("unknown modality '" + std::string(s) + "'");
}

RaggedBatch::RaggedBatch(Modality modality, std::vector<Matrix> samples)
    : modality_(modality), samples_(std::move(samples)) {
  if (samples_.empty()) return;
  dim_ = samples_.front().cols();
  const std::size_t k = samples_.front().rows();
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Matrix& s = samples_[i];
    if (s.cols() != dim_) {
      throw DimensionError("RaggedBatch: sample " + std::to_string(i) + " has D=" +
                           std::to_string(s.cols()) + ", expected " + std::to_string(dim_));
    }
    if (s.rows() == 0) {
      throw DimensionError("RaggedBatch: sample " + std::to_string(i) + " has no rows");
    }
    if (modality_ == Modality::Image && s.rows() != k) {
      throw DimensionError("RaggedBatch: image sample " + std::to_string(i) + " has K=" +
                           std::to_string(s.rows()) + ", expected " + std::to_string(k));
    }
  }
}

std::size_t RaggedBatch::rows_per_sample() const {
  if (samples_.empty()) return 0;
  const std::size_t k = samples_.front().rows();
  for (const auto& s : samples_)
    if (s.rows() != k) throw DimensionError("RaggedBatch: samples differ in row count");
  return k;
}

std::size_t Rng::uniform_int(std::size_t lo, std::size_t hi) {
  std::uniform_int_distribution<std::size_t> dist(lo, hi);
  return dist(engine_);
}

Matrix Rng::normal_matrix(std::size_t rows, std::size_t cols, double stddev) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = stddev * normal();
  return m;
}

}  // namespace lab
