#include "lab/metrics.hpp"

#include <cmath>

#include "lab/errors.hpp"
#include "lab/tensor_io.hpp"

namespace lab {

double local_uniformity(const RaggedBatch& y, double tau_metric) { return -uni_gauss(y, tau_metric); }

double global_uniformity(const Matrix& y_bar, double t) {
  const std::size_t n = y_bar.rows();
  if (n < 2) throw EmptyBatchError("global_uniformity: need at least 2 rows");
  if (!(t > 0.0)) throw ConfigError("global_uniformity: t must be > 0");
  const Matrix u = normalize_rows_unit(y_bar);
  std::vector<double> terms;
  terms.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t d = 0; d < u.cols(); ++d) {
        const double diff = u(i, d) - u(j, d);
        sq += diff * diff;
      }
      terms.push_back(-t * sq);
    }
  return -(logsumexp(terms) - std::log(static_cast<double>(n * n)));
}

double global_alignment(const GlobalReps& g) {
  g.validate();
  const std::size_t n = g.zg_s.rows();
  if (n == 0) throw EmptyBatchError("global_alignment: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cosine(g.zg_s.row(i), g.zg_r.row(i));
  return total / static_cast<double>(n);
}

bool MetricRecord::all_finite() const {
  for (double v : {loss_total, loss_global, loss_uni_image, loss_uni_report, align_global, unif_local_image,
                   unif_local_report, unif_global_image, unif_global_report})
    if (!std::isfinite(v)) return false;
  return true;
}

const std::string& metric_csv_header() {
  static const std::string header =
      "step,loss_total,loss_global,loss_uni_image,loss_uni_report,align_global,unif_local_image,"
      "unif_local_report,unif_global_image,unif_global_report";
  return header;
}

std::string metric_csv_row(const MetricRecord& r) {
  std::string out = std::to_string(r.step);
  for (double v : {r.loss_total, r.loss_global, r.loss_uni_image, r.loss_uni_report, r.align_global,
                   r.unif_local_image, r.unif_local_report, r.unif_global_image, r.unif_global_report}) {
    out += ',';
    out += format_double(v);
  }
  return out;
}

std::string empty_metric_csv_row() { return std::string(9, ','); }

}  // namespace lab
