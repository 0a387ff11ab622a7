#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lab/losses.hpp"
#include "lab/matrix.hpp"
#include "lab/numeric.hpp"

namespace lab {

/// -uni_gauss(y, tau_metric). Lies in [-1/tau_metric, ...); collapse is the minimum.
double local_uniformity(const RaggedBatch& y, double tau_metric);

/// -log mean_{i,j} exp(-t |y_i - y_j|^2) over unit-normalized rows, i == j
/// included. Needs N >= 2 (EmptyBatchError).
double global_uniformity(const Matrix& y_bar, double t = 2.0);

/// Mean cosine of the paired global rows.
double global_alignment(const GlobalReps& g);

struct MetricRecord {
  std::size_t step = 0;
  double loss_total = 0.0;
  double loss_global = 0.0;
  double loss_uni_image = 0.0;
  double loss_uni_report = 0.0;
  double align_global = 0.0;
  double unif_local_image = 0.0;
  double unif_local_report = 0.0;
  double unif_global_image = 0.0;
  double unif_global_report = 0.0;

  bool all_finite() const;
};

/// Exact CSV header, without config columns.
const std::string& metric_csv_header();

/// One CSV line (no newline) in header order, shortest round-trip values.
std::string metric_csv_row(const MetricRecord& r);

/// Same number of empty fields, for cells that produced no record.
std::string empty_metric_csv_row();

}  // namespace lab
