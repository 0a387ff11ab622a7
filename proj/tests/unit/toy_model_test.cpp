#include <cmath>

#include <gtest/gtest.h>

#include "lab/errors.hpp"
#include "lab/objective.hpp"
#include "lab/toy_model.hpp"

using namespace lab;

namespace {

SyntheticDatasetSpec small_spec() {
  SyntheticDatasetSpec s;
  s.n_total = 3;
  s.grid_h = 2;
  s.grid_w = 3;
  s.m_min = 2;
  s.m_max = 3;
  s.d_latent = 4;
  s.d_input = 5;
  s.noise_sigma = 0.1;
  s.seed = RngSeed{5};
  return s;
}

ModelConfig small_model() {
  ModelConfig m;
  m.d_input = 5;
  m.d_hidden = 6;
  m.d_rep = 4;
  m.grid_h = 2;
  m.grid_w = 3;
  return m;
}

}  // namespace

TEST(Dataset, SingleTopicNoNoiseGivesIdenticalSentences) {
  auto s = small_spec();
  s.m_min = s.m_max = 1;
  s.noise_sigma = 0.0;
  const auto d = generate_dataset(s);
  for (const auto& r : d.reports) EXPECT_EQ(r.rows(), 1u);
  for (const auto& img : d.images)
    for (std::size_t k = 1; k < img.rows(); ++k)
      for (std::size_t c = 0; c < img.cols(); ++c) EXPECT_EQ(img(k, c), img(0, c));
}

TEST(Dataset, SentencesWithinSampleIdenticalWhenTopicsRepeatWithoutNoise) {
  auto s = small_spec();
  s.noise_sigma = 0.0;
  s.orthonormal_topics = true;
  const auto d = generate_dataset(s);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t m = 0; m < d.reports[i].rows(); ++m) {
      double sq = 0.0;
      for (std::size_t c = 0; c < 5; ++c) {
        const double topic = c < 4 ? d.topics[i](m, c) : 0.0;
        EXPECT_EQ(d.reports[i](m, c), topic);
        sq += topic * topic;
      }
      EXPECT_EQ(sq, 1.0);
    }
}

TEST(Dataset, DeterministicForSeed) {
  const auto a = generate_dataset(small_spec());
  const auto b = generate_dataset(small_spec());
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.reports, b.reports);
  EXPECT_EQ(a.region_topic, b.region_topic);
  auto other = small_spec();
  other.seed = RngSeed{6};
  EXPECT_NE(generate_dataset(other).images, a.images);
}

TEST(Dataset, PartitionCoversEveryTopic) {
  auto s = small_spec();
  s.n_total = 40;
  s.grid_h = s.grid_w = 4;
  s.m_min = 1;
  s.m_max = 4;
  const auto d = generate_dataset(s);
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::vector<int> seen(d.reports[i].rows(), 0);
    for (std::size_t t : d.region_topic[i]) seen.at(t) = 1;
    for (int v : seen) EXPECT_EQ(v, 1);
  }
}

TEST(Dataset, InvalidSpecsRejected) {
  auto s = small_spec();
  s.m_min = 0;
  EXPECT_THROW(generate_dataset(s), ConfigError);
  s = small_spec();
  s.noise_sigma = -1;
  EXPECT_THROW(generate_dataset(s), ConfigError);
  s = small_spec();
  s.m_max = 7;
  EXPECT_THROW(generate_dataset(s), ConfigError);
}

TEST(AttentionPool, SingleRowZeroQueryAndConvexHull) {
  const Matrix one = Matrix::from_rows({{1, -2, 3}});
  const auto r1 = attention_pool(one, Matrix::from_rows({{1}, {1}, {1}}));
  EXPECT_EQ(r1.output, one);
  EXPECT_EQ(r1.weights, Matrix::from_rows({{1.0}}));

  Rng rng(RngSeed{1});
  const Matrix locals = rng.normal_matrix(5, 3);
  const auto r0 = attention_pool(locals, Matrix(3, 1, 0.0));
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 5; ++r) mean += locals(r, c) / 5.0;
    EXPECT_NEAR(r0.output(0, c), mean, 1e-14);
  }
  const auto rq = attention_pool(locals, rng.normal_matrix(3, 1));
  double sum = 0.0;
  for (double w : rq.weights.data()) sum += w;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  for (std::size_t c = 0; c < 3; ++c) {
    double lo = locals(0, c), hi = locals(0, c);
    for (std::size_t r = 1; r < 5; ++r) {
      lo = std::min(lo, locals(r, c));
      hi = std::max(hi, locals(r, c));
    }
    EXPECT_GE(rq.output(0, c), lo - 1e-12);
    EXPECT_LE(rq.output(0, c), hi + 1e-12);
  }
  EXPECT_THROW(attention_pool(Matrix(0, 3), Matrix(3, 1)), DimensionError);
}

TEST(CrossAttention, SingleKeyAndIdentityProjections) {
  const Matrix key = Matrix::from_rows({{0.5, -1}});
  Rng rng(RngSeed{2});
  const Matrix q = rng.normal_matrix(3, 2);
  const auto r = cross_attention(q, key, 1.0);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.alpha(i, 0), 1.0);
    EXPECT_EQ(r.output(i, 0), 0.5);
    EXPECT_EQ(r.output(i, 1), -1.0);
  }
  const Matrix kv = rng.normal_matrix(4, 2);
  const auto simple = cross_attention(q, kv, 0.7);
  const auto full = cross_attention(q, kv, 0.7, Matrix::identity(2), Matrix::identity(2), Matrix::identity(2));
  EXPECT_LE(max_abs_diff(simple.output, full.output), 1e-12);
  EXPECT_LE(max_abs_diff(simple.alpha, full.alpha), 1e-12);
  EXPECT_THROW(cross_attention(q, kv, 0.0), ConfigError);
}

TEST(Positiveness, Values) {
  EXPECT_EQ(positiveness_matrix(1, 1, 1.0), Matrix::from_rows({{1.0}}));
  const Matrix p = positiveness_matrix(2, 1, 1.0);
  EXPECT_NEAR(p(0, 0), 0.62245933120185456, 1e-15);
  EXPECT_NEAR(p(0, 1), 1.0 - 0.62245933120185456, 1e-15);
  const Matrix g = positiveness_matrix(3, 4, 0.8);
  for (std::size_t a = 0; a < 12; ++a) {
    double s = 0.0;
    for (std::size_t b = 0; b < 12; ++b) s += g(a, b);
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
  EXPECT_THROW(positiveness_matrix(2, 2, 0.0), ConfigError);
}

TEST(Forward, ShapesAndStochasticRows) {
  const auto data = generate_dataset(small_spec());
  const auto cfg = small_model();
  const auto params = init_params(cfg, data, RngSeed{3});
  const auto out = forward(params, cfg, full_batch(data));
  EXPECT_EQ(out.global.zg_s.rows(), 3u);
  EXPECT_EQ(out.global.zg_s.cols(), 4u);
  EXPECT_EQ(out.ybar_r.cols(), 4u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out.z_s[i].rows(), 6u);
    EXPECT_EQ(out.cross.z_sr[i].rows(), data.reports[i].rows());
  }
  EXPECT_NO_THROW(out.weights.validate(WeightSet::Mode::Normalized));
}

TEST(Forward, DefaultSevenBySevenGrid) {
  auto s = small_spec();
  s.grid_h = s.grid_w = 7;
  auto cfg = small_model();
  cfg.grid_h = cfg.grid_w = 7;
  const auto data = generate_dataset(s);
  const auto out = forward(init_params(cfg, data, RngSeed{3}), cfg, full_batch(data));
  EXPECT_EQ(out.z_s.rows_per_sample(), 49u);
}

TEST(Forward, SharedHeadsMapIdenticalInputsIdentically) {
  const auto data = generate_dataset(small_spec());
  auto cfg = small_model();
  cfg.shared_heads = true;
  auto params = init_params(cfg, data, RngSeed{3});
  EXPECT_EQ(params.count("img.proj"), 1u);
  EXPECT_EQ(params.count("img.local_proj"), 0u);
  // One image region makes the pooled input equal to the local one.
  auto s = small_spec();
  s.grid_h = s.grid_w = 1;
  s.m_min = s.m_max = 1;
  cfg.grid_h = cfg.grid_w = 1;
  const auto d1 = generate_dataset(s);
  const auto out = forward(init_params(cfg, d1, RngSeed{3}), cfg, full_batch(d1));
  for (std::size_t i = 0; i < d1.size(); ++i)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(out.z_s[i](0, c), out.global.zg_s(i, c));

  auto unshared = cfg;
  unshared.shared_heads = false;
  const auto out2 = forward(init_params(unshared, d1, RngSeed{3}), unshared, full_batch(d1));
  EXPECT_EQ(out2.z_s[0].rows(), out.z_s[0].rows());
  EXPECT_EQ(out2.global.zg_s.cols(), out.global.zg_s.cols());
}

TEST(Forward, FullModeWithIdentityProjectionsMatchesSimplified) {
  const auto data = generate_dataset(small_spec());
  auto cfg = small_model();
  const auto params = init_params(cfg, data, RngSeed{3});
  auto full = cfg;
  full.cross_mode = CrossMode::Full;
  auto params_full = params;
  for (const char* n : {"cross.wq", "cross.wk", "cross.wv"}) params_full.emplace(n, Matrix::identity(4));
  const auto a = forward(params, cfg, full_batch(data));
  const auto b = forward(params_full, full, full_batch(data));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LE(max_abs_diff(a.cross.z_rs[i], b.cross.z_rs[i]), 1e-12);
    EXPECT_LE(max_abs_diff(a.weights.alpha_sr[i], b.weights.alpha_sr[i]), 1e-12);
  }
}

TEST(Forward, SimplifiedCrossRepsAreAttentionWeightedSums) {
  const auto data = generate_dataset(small_spec());
  const auto cfg = small_model();
  const auto out = forward(init_params(cfg, data, RngSeed{3}), cfg, full_batch(data));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LE(max_abs_diff(out.cross.z_rs[i], matmul(out.weights.alpha_rs[i], out.z_r[i])), 1e-15);
    EXPECT_LE(max_abs_diff(out.cross.z_sr[i], matmul(out.weights.alpha_sr[i], out.z_s[i])), 1e-15);
  }
}

TEST(Forward, MissingParameterAndBadBatch) {
  const auto data = generate_dataset(small_spec());
  const auto cfg = small_model();
  auto params = init_params(cfg, data, RngSeed{3});
  params.erase("rep.query");
  EXPECT_THROW(forward(params, cfg, full_batch(data)), ConfigError);
  auto wrong_grid = cfg;
  wrong_grid.grid_w = 2;
  EXPECT_THROW(forward(init_params(cfg, data, RngSeed{3}), wrong_grid, full_batch(data)), DimensionError);
}

TEST(Forward, IsDeterministic) {
  const auto data = generate_dataset(small_spec());
  const auto cfg = small_model();
  const auto params = init_params(cfg, data, RngSeed{3});
  const auto a = forward(params, cfg, full_batch(data));
  const auto b = forward(params, cfg, full_batch(data));
  EXPECT_EQ(a.z_s, b.z_s);
  EXPECT_EQ(a.global.zg_r, b.global.zg_r);
}

TEST(Forward, FreeEncoderStartsAtInputs) {
  auto s = small_spec();
  s.d_input = 4;
  const auto data = generate_dataset(s);
  auto cfg = small_model();
  cfg.encoder = EncoderKind::Free;
  cfg.d_input = 4;
  cfg.projection_heads = false;
  const auto out = forward(init_params(cfg, data, RngSeed{3}), cfg, select(data, {2, 0}));
  EXPECT_EQ(out.z_s[0], data.images[2]);
  EXPECT_EQ(out.y_r[1], data.reports[0]);
}

class ForwardGradient : public ::testing::TestWithParam<ZooTerm> {};

TEST_P(ForwardGradient, MatchesFiniteDifferences) {
  auto s = small_spec();
  s.n_total = 2;
  const auto data = generate_dataset(s);
  auto cfg = small_model();
  cfg.cross_mode = CrossMode::Full;
  const auto params = init_params(cfg, data, RngSeed{4});
  LossParams lp;
  lp.tau = 0.5;
  lp.tau_prime = 0.5;
  const LossConfig lc(lp);
  const ModelBatch batch = full_batch(data);
  const ZooTerm term = GetParam();
  const ad::LossBuilder f = [&](ad::Tape& tape, const ad::LeafMap& p) {
    return zoo_term(forward(tape, p, cfg, batch), lc, term);
  };
  const auto analytic = ad::grad(f, params);
  const auto numeric = ad::finite_diff(f, params, 1e-5);
  EXPECT_LE(ad::max_relative_error(analytic.gradients, numeric), 1e-5);
}

INSTANTIATE_TEST_SUITE_P(AllTerms, ForwardGradient, ::testing::ValuesIn(all_zoo_terms()),
                         [](const auto& info) { return std::string(to_string(info.param)); });
