#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lab/autodiff.hpp"
#include "lab/losses.hpp"
#include "lab/matrix.hpp"
#include "lab/numeric.hpp"
#include "lab/tensor_io.hpp"

namespace lab {

/// Synthetic paired data. Each sample draws M_i topics (unit vectors, pulled
/// toward a per-sample theme by topic_coherence); sentences are their topics plus noise, image regions carry the topic of a Voronoi cell of the
/// H x W grid (blended with the sample's mean topic and passed through a fixed
/// random map) plus noise.
struct SyntheticDatasetSpec {
  std::size_t n_total = 64;
  std::size_t grid_h = 4;
  std::size_t grid_w = 4;
  std::size_t m_min = 2;
  std::size_t m_max = 4;
  std::size_t d_latent = 8;
  std::size_t d_input = 8;
  double noise_sigma = 0.1;
  RngSeed seed{0};
  bool orthonormal_topics = false;
  double mixing = 0.2;
  double topic_coherence = 0.0;  // cosine between each topic and the sample theme

  std::size_t regions() const noexcept { return grid_h * grid_w; }
  /// Throws ConfigError.
  void validate() const;
};

struct SyntheticDataset {
  RaggedBatch images;   // K x d_input per sample
  RaggedBatch reports;  // M_i x d_input per sample
  std::vector<std::vector<std::size_t>> region_topic;  // K entries per sample, index into the sample's sentences
  std::vector<Matrix> topics;                          // M_i x d_latent per sample

  std::size_t size() const noexcept { return images.size(); }
};

SyntheticDataset generate_dataset(const SyntheticDatasetSpec& spec);

struct PoolResult {
  Matrix output;   // 1 x D
  Matrix weights;  // 1 x K
};

/// softmax(locals * query) weighted row sum. query is D x 1.
PoolResult attention_pool(const Matrix& locals, const Matrix& query);

struct AttentionResult {
  Matrix output;  // rows of queries x D
  Matrix alpha;   // rows of queries x rows of keys_values
};

/// alpha = softmax_rows(queries keys_values^T / tau_attn), output = alpha keys_values.
AttentionResult cross_attention(const Matrix& queries, const Matrix& keys_values, double tau_attn);

/// Same with learned maps: softmax_rows((q Wq)(kv Wk)^T / tau_attn) (kv Wv).
AttentionResult cross_attention(const Matrix& queries, const Matrix& keys_values, double tau_attn,
                                const Matrix& wq, const Matrix& wk, const Matrix& wv);

/// Row-normalized Gaussian kernel over grid positions k = row * W + col.
Matrix positiveness_matrix(std::size_t h, std::size_t w, double bandwidth);

enum class EncoderKind { Mlp, Free };
enum class CrossMode { Simplified, Full };
enum class LocalWeights { Pooling, Uniform };

std::string_view to_string(EncoderKind v);
std::string_view to_string(CrossMode v);
std::string_view to_string(LocalWeights v);
EncoderKind encoder_kind_from_string(std::string_view s);
CrossMode cross_mode_from_string(std::string_view s);
LocalWeights local_weights_from_string(std::string_view s);

/// Architecture. Mlp: linear, tanh, linear per modality. Free: every sample's
/// locals are parameters themselves ("free.img.<i>", "free.rep.<i>"),
/// initialized from the inputs, so d_input must equal d_rep.
struct ModelConfig {
  EncoderKind encoder = EncoderKind::Mlp;
  std::size_t d_input = 8;
  std::size_t d_hidden = 16;
  std::size_t d_rep = 8;
  bool projection_heads = true;
  bool shared_heads = false;
  CrossMode cross_mode = CrossMode::Simplified;
  double tau_attn = 0.0;  // <= 0 means sqrt(d_rep)
  LocalWeights weights = LocalWeights::Pooling;
  std::size_t grid_h = 4;
  std::size_t grid_w = 4;
  double bandwidth = 1.0;

  double attention_temperature() const;
  void validate() const;
};

/// Parameter names for cfg, in the order they are created.
std::vector<std::string> parameter_names(const ModelConfig& cfg, std::size_t n_samples);

/// Fresh parameters. Free encoders copy the dataset inputs.
NamedTensors init_params(const ModelConfig& cfg, const SyntheticDataset& data, RngSeed seed);

/// Inputs of one forward pass. index[j] is the dataset position of sample j
/// (used to look up free parameters).
struct ModelBatch {
  RaggedBatch x_s;
  RaggedBatch x_r;
  std::vector<std::size_t> index;
};

ModelBatch full_batch(const SyntheticDataset& data);
ModelBatch select(const SyntheticDataset& data, const std::vector<std::size_t>& index);

struct TracedForward {
  std::vector<ad::Var> y_s, y_r;          // pre-projection locals
  ad::Var ybar_s, ybar_r;                 // N x D pooled, pre-projection
  std::vector<ad::Var> z_s, z_r;          // projected locals
  ad::Var zbar_s, zbar_r;                 // N x D projected globals
  std::vector<ad::Var> z_rs, z_sr;        // cross representations
  std::vector<ad::Var> alpha_rs, alpha_sr;
  std::vector<ad::Var> w_s, w_r;          // 1 x K, 1 x M_i
  ad::Var p_s;
};

TracedForward forward(ad::Tape& tape, const ad::LeafMap& params, const ModelConfig& cfg, const ModelBatch& batch);

struct ForwardOutputs {
  RaggedBatch y_s{Modality::Image, {}};
  RaggedBatch y_r{Modality::Report, {}};
  Matrix ybar_s, ybar_r;
  RaggedBatch z_s{Modality::Image, {}};
  RaggedBatch z_r{Modality::Report, {}};
  GlobalReps global;
  CrossReps cross;
  WeightSet weights;
};

ForwardOutputs forward(const NamedTensors& params, const ModelConfig& cfg, const ModelBatch& batch);

}  // namespace lab
