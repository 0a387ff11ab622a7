#include "lab/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lab/errors.hpp"

namespace lab {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

Matrix pad_row(const Matrix& row, std::size_t width) {
  Matrix out(1, width);
  std::copy(row.data().begin(), row.data().end(), out.data().begin());
  return out;
}

Matrix stack(const std::vector<Matrix>& rows) {
  Matrix out(rows.size(), rows.front().cols());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].data().begin(), rows[r].data().end(), out.row(r).begin());
  return out;
}

double grid_distance_sq(std::size_t a, std::size_t b, std::size_t w) {
  const double dr = static_cast<double>(a / w) - static_cast<double>(b / w);
  const double dc = static_cast<double>(a % w) - static_cast<double>(b % w);
  return dr * dr + dc * dc;
}

const ad::Var& param(const ad::LeafMap& params, const std::string& name) {
  const auto it = params.find(name);
  if (it == params.end()) throw ConfigError("forward: missing parameter '" + name + "'");
  return it->second;
}

std::string prefix(Modality m) { return m == Modality::Image ? "img." : "rep."; }

}  // namespace

void SyntheticDatasetSpec::validate() const {
  require(n_total >= 1, "dataset: n_total must be >= 1");
  require(grid_h >= 1 && grid_w >= 1, "dataset: grid must be at least 1x1");
  require(m_min >= 1 && m_min <= m_max, "dataset: need 1 <= m_min <= m_max");
  require(m_max <= regions(), "dataset: m_max must not exceed the region count");
  require(d_latent >= 1 && d_latent <= d_input, "dataset: need 1 <= d_latent <= d_input");
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "dataset: noise_sigma must be >= 0");
  require(mixing >= 0.0 && mixing <= 1.0, "dataset: mixing must lie in [0, 1]");
  require(!orthonormal_topics || m_max <= d_latent, "dataset: orthonormal topics need m_max <= d_latent");
  require(topic_coherence >= 0.0 && topic_coherence < 1.0, "dataset: topic_coherence must lie in [0, 1)");
  require(!orthonormal_topics || topic_coherence == 0.0, "dataset: orthonormal topics need topic_coherence = 0");
}

SyntheticDataset generate_dataset(const SyntheticDatasetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t k = spec.regions();
  const Matrix image_map = rng.normal_matrix(spec.d_input, spec.d_input, 1.0 / std::sqrt(static_cast<double>(spec.d_input)));

  std::vector<Matrix> images, reports, topics;
  std::vector<std::vector<std::size_t>> assignment;
  for (std::size_t i = 0; i < spec.n_total; ++i) {
    const std::size_t m = rng.uniform_int(spec.m_min, spec.m_max);
    std::vector<Matrix> topic_rows;
    if (spec.orthonormal_topics) {
      std::vector<std::size_t> axes(spec.d_latent);
      std::iota(axes.begin(), axes.end(), 0);
      std::shuffle(axes.begin(), axes.end(), rng.engine());
      for (std::size_t t = 0; t < m; ++t) {
        Matrix e(1, spec.d_latent);
        e(0, axes[t]) = 1.0;
        topic_rows.push_back(e);
      }
    } else {
      const Matrix theme = normalize_rows_unit(rng.normal_matrix(1, spec.d_latent));
      const double c = spec.topic_coherence;
      for (std::size_t t = 0; t < m; ++t) {
        // Unit direction orthogonal to the theme, blended so cos(topic, theme) = c.
        Matrix u = rng.normal_matrix(1, spec.d_latent);
        const double along = dot(u.row(0), theme.row(0));
        for (std::size_t d = 0; d < spec.d_latent; ++d) u(0, d) -= along * theme(0, d);
        u = normalize_rows_unit(u);
        Matrix topic(1, spec.d_latent);
        for (std::size_t d = 0; d < spec.d_latent; ++d) topic(0, d) = c * theme(0, d) + std::sqrt(1.0 - c * c) * u(0, d);
        topic_rows.push_back(topic);
      }
    }

    Matrix sentences(m, spec.d_input);
    Matrix mean_topic(1, spec.d_input);
    for (std::size_t t = 0; t < m; ++t) {
      const Matrix padded = pad_row(topic_rows[t], spec.d_input);
      for (std::size_t d = 0; d < spec.d_input; ++d) {
        sentences(t, d) = padded(0, d) + spec.noise_sigma * rng.normal();
        mean_topic(0, d) += padded(0, d) / static_cast<double>(m);
      }
    }

    // Voronoi cells around m distinct seed regions; ties go to the lower seed.
    std::vector<std::size_t> cells(k);
    std::iota(cells.begin(), cells.end(), 0);
    std::shuffle(cells.begin(), cells.end(), rng.engine());
    std::vector<std::size_t> owner(k);
    for (std::size_t r = 0; r < k; ++r) {
      std::size_t best = 0;
      for (std::size_t t = 1; t < m; ++t)
        if (grid_distance_sq(r, cells[t], spec.grid_w) < grid_distance_sq(r, cells[best], spec.grid_w)) best = t;
      owner[r] = best;
    }

    Matrix regions(k, spec.d_input);
    for (std::size_t r = 0; r < k; ++r) {
      const Matrix padded = pad_row(topic_rows[owner[r]], spec.d_input);
      Matrix blend(1, spec.d_input);
      for (std::size_t d = 0; d < spec.d_input; ++d)
        blend(0, d) = (1.0 - spec.mixing) * padded(0, d) + spec.mixing * mean_topic(0, d);
      const Matrix mapped = matmul(blend, image_map);
      for (std::size_t d = 0; d < spec.d_input; ++d) regions(r, d) = mapped(0, d) + spec.noise_sigma * rng.normal();
    }

    images.push_back(std::move(regions));
    reports.push_back(std::move(sentences));
    topics.push_back(stack(topic_rows));
    assignment.push_back(std::move(owner));
  }
  return {RaggedBatch(Modality::Image, std::move(images)), RaggedBatch(Modality::Report, std::move(reports)),
          std::move(assignment), std::move(topics)};
}

PoolResult attention_pool(const Matrix& locals, const Matrix& query) {
  if (locals.rows() == 0) throw DimensionError("attention_pool: no rows");
  if (query.rows() != locals.cols() || query.cols() != 1) throw DimensionError("attention_pool: query must be D x 1");
  const Matrix weights = softmax_rows(transpose(matmul(locals, query)), 1.0);
  return {matmul(weights, locals), weights};
}

AttentionResult cross_attention(const Matrix& queries, const Matrix& keys_values, double tau_attn) {
  if (!(tau_attn > 0.0)) throw ConfigError("cross_attention: tau_attn must be > 0");
  if (keys_values.rows() == 0) throw DimensionError("cross_attention: no keys");
  const Matrix alpha = softmax_rows(matmul(queries, transpose(keys_values)), tau_attn);
  return {matmul(alpha, keys_values), alpha};
}

AttentionResult cross_attention(const Matrix& queries, const Matrix& keys_values, double tau_attn,
                                const Matrix& wq, const Matrix& wk, const Matrix& wv) {
  if (!(tau_attn > 0.0)) throw ConfigError("cross_attention: tau_attn must be > 0");
  if (keys_values.rows() == 0) throw DimensionError("cross_attention: no keys");
  const Matrix alpha = softmax_rows(matmul(matmul(queries, wq), transpose(matmul(keys_values, wk))), tau_attn);
  return {matmul(alpha, matmul(keys_values, wv)), alpha};
}

Matrix positiveness_matrix(std::size_t h, std::size_t w, double bandwidth) {
  require(h >= 1 && w >= 1, "positiveness_matrix: grid must be at least 1x1");
  require(bandwidth > 0.0, "positiveness_matrix: bandwidth must be > 0");
  const std::size_t k = h * w;
  Matrix p(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    double total = 0.0;
    for (std::size_t b = 0; b < k; ++b) {
      p(a, b) = std::exp(-grid_distance_sq(a, b, w) / (2.0 * bandwidth * bandwidth));
      total += p(a, b);
    }
    for (std::size_t b = 0; b < k; ++b) p(a, b) /= total;
  }
  return p;
}

std::string_view to_string(EncoderKind v) { return v == EncoderKind::Mlp ? "mlp" : "free"; }
std::string_view to_string(CrossMode v) { return v == CrossMode::Simplified ? "simplified" : "full"; }
std::string_view to_string(LocalWeights v) { return v == LocalWeights::Pooling ? "pooling" : "uniform"; }

EncoderKind encoder_kind_from_string(std::string_view s) {
  if (s == "mlp") return EncoderKind::Mlp;
  if (s == "free") return EncoderKind::Free;
  throw ConfigError("unknown encoder '" + std::string(s) + "'");
}

CrossMode cross_mode_from_string(std::string_view s) {
  if (s == "simplified") return CrossMode::Simplified;
  if (s == "full") return CrossMode::Full;
  throw ConfigError("unknown cross mode '" + std::string(s) + "'");
}

LocalWeights local_weights_from_string(std::string_view s) {
  if (s == "pooling") return LocalWeights::Pooling;
  if (s == "uniform") return LocalWeights::Uniform;
  throw ConfigError("unknown local weights '" + std::string(s) + "'");
}

double ModelConfig::attention_temperature() const {
  return tau_attn > 0.0 ? tau_attn : std::sqrt(static_cast<double>(d_rep));
}

void ModelConfig::validate() const {
  require(d_input >= 1 && d_hidden >= 1 && d_rep >= 1, "model: dimensions must be >= 1");
  require(encoder != EncoderKind::Free || d_input == d_rep, "model: free encoder needs d_input == d_rep");
  require(grid_h >= 1 && grid_w >= 1, "model: grid must be at least 1x1");
  require(bandwidth > 0.0, "model: bandwidth must be > 0");
  require(std::isfinite(tau_attn), "model: tau_attn must be finite");
}

std::vector<std::string> parameter_names(const ModelConfig& cfg, std::size_t n_samples) {
  std::vector<std::string> names;
  for (Modality m : {Modality::Image, Modality::Report}) {
    const std::string p = prefix(m);
    if (cfg.encoder == EncoderKind::Mlp) {
      for (const char* s : {"w1", "b1", "w2", "b2"}) names.push_back(p + s);
    } else {
      for (std::size_t i = 0; i < n_samples; ++i) names.push_back("free." + p + std::to_string(i));
    }
    names.push_back(p + "query");
    if (cfg.projection_heads) {
      if (cfg.shared_heads) {
        names.push_back(p + "proj");
      } else {
        names.push_back(p + "local_proj");
        names.push_back(p + "global_proj");
      }
    }
  }
  if (cfg.cross_mode == CrossMode::Full)
    for (const char* s : {"cross.wq", "cross.wk", "cross.wv"}) names.emplace_back(s);
  return names;
}

NamedTensors init_params(const ModelConfig& cfg, const SyntheticDataset& data, RngSeed seed) {
  cfg.validate();
  if (data.images.dim() != cfg.d_input || data.reports.dim() != cfg.d_input) {
    throw DimensionError("init_params: dataset inputs do not match d_input");
  }
  Rng rng(seed);
  const auto inv_sqrt = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  NamedTensors out;
  for (const auto& name : parameter_names(cfg, data.size())) {
    const std::string leaf = name.substr(name.rfind('.') + 1);
    if (name.rfind("free.", 0) == 0) {
      const std::size_t i = std::stoul(leaf);
      out.emplace(name, name.find(".img.") != std::string::npos ? data.images[i] : data.reports[i]);
    } else if (leaf == "w1") {
      out.emplace(name, rng.normal_matrix(cfg.d_input, cfg.d_hidden, inv_sqrt(cfg.d_input)));
    } else if (leaf == "b1") {
      out.emplace(name, Matrix(1, cfg.d_hidden));
    } else if (leaf == "w2") {
      out.emplace(name, rng.normal_matrix(cfg.d_hidden, cfg.d_rep, inv_sqrt(cfg.d_hidden)));
    } else if (leaf == "b2") {
      out.emplace(name, Matrix(1, cfg.d_rep));
    } else if (leaf == "query") {
      out.emplace(name, rng.normal_matrix(cfg.d_rep, 1, inv_sqrt(cfg.d_rep)));
    } else if (name.rfind("cross.", 0) == 0) {
      out.emplace(name, Matrix::identity(cfg.d_rep));
    } else {
      out.emplace(name, rng.normal_matrix(cfg.d_rep, cfg.d_rep, inv_sqrt(cfg.d_rep)));
    }
  }
  return out;
}

ModelBatch full_batch(const SyntheticDataset& data) {
  std::vector<std::size_t> index(data.size());
  std::iota(index.begin(), index.end(), 0);
  return {data.images, data.reports, std::move(index)};
}

ModelBatch select(const SyntheticDataset& data, const std::vector<std::size_t>& index) {
  std::vector<Matrix> s, r;
  for (std::size_t i : index) {
    if (i >= data.size()) throw DimensionError("select: sample index out of range");
    s.push_back(data.images[i]);
    r.push_back(data.reports[i]);
  }
  return {RaggedBatch(Modality::Image, std::move(s)), RaggedBatch(Modality::Report, std::move(r)), index};
}

namespace {

struct ModalityOut {
  std::vector<ad::Var> y, z, pool_w;
  std::vector<ad::Var> ybar, zbar;
};

ModalityOut encode(ad::Tape& tape, const ad::LeafMap& params, const ModelConfig& cfg, const RaggedBatch& x,
                   const std::vector<std::size_t>& index) {
  const std::string p = prefix(x.modality());
  ModalityOut out;
  const ad::Var query = param(params, p + "query");
  for (std::size_t j = 0; j < x.size(); ++j) {
    ad::Var y;
    if (cfg.encoder == EncoderKind::Mlp) {
      const ad::Var in = tape.constant(x[j]);
      const ad::Var h = ad::tanh(ad::add_row(ad::matmul(in, param(params, p + "w1")), param(params, p + "b1")));
      y = ad::add_row(ad::matmul(h, param(params, p + "w2")), param(params, p + "b2"));
    } else {
      y = param(params, "free." + p + std::to_string(index.at(j)));
    }
    if (y.cols() != cfg.d_rep) throw DimensionError("forward: representation width differs from d_rep");
    const ad::Var a = ad::softmax_rows(ad::transpose(ad::matmul(y, query)), 1.0);
    const ad::Var ybar = ad::matmul(a, y);
    ad::Var z = y, zbar = ybar;
    if (cfg.projection_heads) {
      const ad::Var local = param(params, p + (cfg.shared_heads ? "proj" : "local_proj"));
      const ad::Var global = cfg.shared_heads ? local : param(params, p + "global_proj");
      z = ad::matmul(y, local);
      zbar = ad::matmul(ybar, global);
    }
    out.y.push_back(y);
    out.z.push_back(z);
    out.pool_w.push_back(a);
    out.ybar.push_back(ybar);
    out.zbar.push_back(zbar);
  }
  return out;
}

}  // namespace

TracedForward forward(ad::Tape& tape, const ad::LeafMap& params, const ModelConfig& cfg, const ModelBatch& batch) {
  cfg.validate();
  const std::size_t n = batch.x_s.size();
  if (n == 0) throw EmptyBatchError("forward: empty batch");
  if (batch.x_r.size() != n || batch.index.size() != n) throw DimensionError("forward: batch parts differ in size");
  const std::size_t k = cfg.grid_h * cfg.grid_w;
  if (batch.x_s.rows_per_sample() != k) throw DimensionError("forward: image rows differ from grid size");
  if (cfg.encoder == EncoderKind::Mlp && (batch.x_s.dim() != cfg.d_input || batch.x_r.dim() != cfg.d_input)) {
    throw DimensionError("forward: input width differs from d_input");
  }

  const ModalityOut s = encode(tape, params, cfg, batch.x_s, batch.index);
  const ModalityOut r = encode(tape, params, cfg, batch.x_r, batch.index);

  TracedForward out;
  out.y_s = s.y;
  out.y_r = r.y;
  out.z_s = s.z;
  out.z_r = r.z;
  out.ybar_s = ad::concat_rows(s.ybar);
  out.ybar_r = ad::concat_rows(r.ybar);
  out.zbar_s = ad::concat_rows(s.zbar);
  out.zbar_r = ad::concat_rows(r.zbar);
  out.p_s = tape.constant(positiveness_matrix(cfg.grid_h, cfg.grid_w, cfg.bandwidth));

  const double tau = cfg.attention_temperature();
  const bool full = cfg.cross_mode == CrossMode::Full;
  for (std::size_t j = 0; j < n; ++j) {
    const ad::Var zs = out.z_s[j];
    const ad::Var zr = out.z_r[j];
    const ad::Var qs = full ? ad::matmul(zs, param(params, "cross.wq")) : zs;
    const ad::Var qr = full ? ad::matmul(zr, param(params, "cross.wq")) : zr;
    const ad::Var ks = full ? ad::matmul(zs, param(params, "cross.wk")) : zs;
    const ad::Var kr = full ? ad::matmul(zr, param(params, "cross.wk")) : zr;
    const ad::Var vs = full ? ad::matmul(zs, param(params, "cross.wv")) : zs;
    const ad::Var vr = full ? ad::matmul(zr, param(params, "cross.wv")) : zr;
    const ad::Var a_rs = ad::softmax_rows(ad::matmul(qs, ad::transpose(kr)), tau);
    const ad::Var a_sr = ad::softmax_rows(ad::matmul(qr, ad::transpose(ks)), tau);
    out.alpha_rs.push_back(a_rs);
    out.alpha_sr.push_back(a_sr);
    out.z_rs.push_back(ad::matmul(a_rs, vr));
    out.z_sr.push_back(ad::matmul(a_sr, vs));
    if (cfg.weights == LocalWeights::Pooling) {
      out.w_s.push_back(s.pool_w[j]);
      out.w_r.push_back(r.pool_w[j]);
    } else {
      out.w_s.push_back(tape.constant(Matrix(1, k, 1.0 / static_cast<double>(k))));
      const std::size_t m = zr.rows();
      out.w_r.push_back(tape.constant(Matrix(1, m, 1.0 / static_cast<double>(m))));
    }
  }
  return out;
}

ForwardOutputs forward(const NamedTensors& params, const ModelConfig& cfg, const ModelBatch& batch) {
  ad::Tape tape;
  ad::LeafMap vars;
  for (const auto& [name, m] : params) vars.emplace(name, tape.constant(m));
  const TracedForward t = forward(tape, vars, cfg, batch);
  const auto values = [](const std::vector<ad::Var>& vs) {
    std::vector<Matrix> out;
    out.reserve(vs.size());
    for (const auto& v : vs) out.push_back(v.value());
    return out;
  };
  WeightSet w;
  w.w_s = values(t.w_s);
  w.w_r = values(t.w_r);
  w.p_s = t.p_s.value();
  w.alpha_rs = values(t.alpha_rs);
  w.alpha_sr = values(t.alpha_sr);
  return {RaggedBatch(Modality::Image, values(t.y_s)),
          RaggedBatch(Modality::Report, values(t.y_r)),
          t.ybar_s.value(),
          t.ybar_r.value(),
          RaggedBatch(Modality::Image, values(t.z_s)),
          RaggedBatch(Modality::Report, values(t.z_r)),
          GlobalReps{t.zbar_s.value(), t.zbar_r.value()},
          CrossReps{values(t.z_rs), values(t.z_sr)},
          std::move(w)};
}

}  // namespace lab
