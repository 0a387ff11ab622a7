#include <cmath>

#include <gtest/gtest.h>

#include "lab/decomposition.hpp"
#include "lab/errors.hpp"
#include "random_batches.hpp"

using namespace lab;
using labtest::make_config;
using labtest::random_batch;

namespace {

void expect_split(const DecomposedLoss& d, double reference) {
  EXPECT_NEAR(d.total, d.align + d.dist, 1e-12 * std::max(1.0, std::abs(d.total)));
  EXPECT_NEAR(reference, d.align + d.dist, 1e-12 * std::max(1.0, std::abs(reference)));
}

}  // namespace

TEST(DecomposeGlobal, RecomposesToLoss) {
  Rng rng(RngSeed{31});
  for (double lambda : {0.0, 0.3, 1.0}) {
    const GlobalReps g{rng.normal_matrix(4, 5), rng.normal_matrix(4, 5)};
    const auto c = make_config(0.1, 0.2, lambda);
    expect_split(decompose_global(g, c), global_loss(g, c));
  }
}

TEST(DecomposeGlobal, SingleSampleCancels) {
  const GlobalReps g{Matrix::from_rows({{1, 2, 0}}), Matrix::from_rows({{0, 1, 1}})};
  const auto c = make_config(0.2, 0.2);
  const double cs = cosine(g.zg_s.row(0), g.zg_r.row(0));
  const auto d = decompose_global(g, c);
  EXPECT_NEAR(d.align, -cs / 0.2, 1e-14);
  EXPECT_NEAR(d.dist, cs / 0.2, 1e-14);
  EXPECT_NEAR(d.total, 0.0, 1e-14);
}

TEST(DecomposeGlobal, AlignNonPositiveForNonNegativeCosines) {
  Rng rng(RngSeed{32});
  Matrix a = rng.normal_matrix(5, 3), b = rng.normal_matrix(5, 3);
  for (auto& v : a.data()) v = std::abs(v);
  for (auto& v : b.data()) v = std::abs(v);
  EXPECT_LE(decompose_global({a, b}, make_config(0.5, 0.5)).align, 0.0);
}

TEST(DecomposeLocalImage, SingleRegionCancels) {
  const RaggedBatch zs(Modality::Image, {Matrix::from_rows({{1, 1}})});
  const CrossReps cross{{Matrix::from_rows({{1, 0}})}, {}};
  WeightSet w;
  w.w_s = {Matrix::from_rows({{1.0}})};
  w.w_r = {Matrix::from_rows({{1.0}})};
  w.p_s = Matrix::identity(1);
  const auto d = decompose_local_image(zs, cross, w, make_config(0.1, 0.5));
  EXPECT_NEAR(d.align, -std::sqrt(0.5) / 0.5, 1e-14);
  EXPECT_NEAR(d.dist, std::sqrt(0.5) / 0.5, 1e-14);
  EXPECT_NEAR(d.total, 0.0, 1e-14);
}

TEST(DecomposeLocalImage, RecomposesForNormalizedAndGeneralWeights) {
  Rng rng(RngSeed{33});
  for (bool normalized : {true, false}) {
    const auto b = random_batch(rng, 3, 4, 3, 5, normalized);
    const auto cross = labtest::random_cross(rng, b);
    const auto c = make_config(0.1, 0.2);
    expect_split(decompose_local_image(b.zs, cross, b.w, c), local_image_loss(b.zs, cross, b.w, c));
  }
}

TEST(DecomposeLocalImage, TransposedPositivenessLeavesAlignUnchangedUnderUniformWeights) {
  Rng rng(RngSeed{34});
  auto b = random_batch(rng, 2, 4, 3, 3);
  const auto cross = labtest::random_cross(rng, b);
  for (auto& w : b.w.w_s) w = Matrix(1, 4, 0.25);
  const auto c = make_config(0.1, 0.3);
  const double base = decompose_local_image(b.zs, cross, b.w, c).align;
  b.w.p_s = transpose(b.w.p_s);
  EXPECT_NEAR(decompose_local_image(b.zs, cross, b.w, c).align, base, 1e-13);
}

TEST(DecomposeLocalImage, CachedWeightsMatchFreshOnes) {
  Rng rng(RngSeed{35});
  const auto b = random_batch(rng, 2, 3, 3, 3);
  const auto cross = labtest::random_cross(rng, b);
  const auto c = make_config(0.1, 0.3);
  const auto sym = symmetrized_image_weights(b.w);
  const auto x = decompose_local_image(b.zs, cross, b.w, sym, c);
  const auto y = decompose_local_image(b.zs, cross, b.w, c);
  EXPECT_EQ(x.align, y.align);
  EXPECT_EQ(x.dist, y.dist);
}

TEST(DecomposeLocalReport, SingleSentenceCancels) {
  const RaggedBatch zr(Modality::Report, {Matrix::from_rows({{0, 1}})});
  const CrossReps cross{{}, {Matrix::from_rows({{1, 1}})}};
  WeightSet w;
  w.w_s = {Matrix::from_rows({{1.0}})};
  w.w_r = {Matrix::from_rows({{1.0}})};
  w.p_s = Matrix::identity(1);
  const auto d = decompose_local_report(zr, cross, w, make_config(0.1, 0.25));
  EXPECT_NEAR(d.align, -std::sqrt(0.5) / 0.25, 1e-14);
  EXPECT_NEAR(d.total, 0.0, 1e-14);
}

TEST(DecomposeLocalReport, RecomposesToLoss) {
  Rng rng(RngSeed{36});
  for (bool normalized : {true, false}) {
    const auto b = random_batch(rng, 4, 3, 5, 4, normalized);
    const auto cross = labtest::random_cross(rng, b);
    const auto c = make_config(0.1, 1.0);
    expect_split(decompose_local_report(b.zr, cross, b.w, c), local_report_loss(b.zr, cross, b.w, c));
  }
}

TEST(DecomposeLocalReport, AlignNonPositiveForNonNegativeCosines) {
  const RaggedBatch zr(Modality::Report, {Matrix::from_rows({{1, 0}, {1, 1}})});
  const CrossReps cross{{}, {Matrix::from_rows({{2, 1}, {0, 1}})}};
  WeightSet w;
  w.w_s = {Matrix::from_rows({{1.0}})};
  w.w_r = {Matrix::from_rows({{0.3, 0.7}})};
  w.p_s = Matrix::identity(1);
  EXPECT_LE(decompose_local_report(zr, cross, w, make_config(1, 1)).align, 0.0);
}

TEST(XiWeights, GlobalUniformEntries) {
  Rng rng(RngSeed{37});
  auto b = random_batch(rng, 3, 4, 3, 2);
  const WeightSet w = WeightSet::uniform(b.zs, b.zr);
  const auto xi = xi_weights(XiVariant::Global, w, make_config(0.2, 0.2));
  for (std::size_t i = 0; i < 3; ++i) {
    const double expected = 1.0 / (4.0 * static_cast<double>(b.zr[i].rows()) * 0.2);
    for (double v : xi.xi[i].data()) EXPECT_NEAR(v, expected, 1e-15);
    EXPECT_LE(rank1_residual(xi.xi[i]), 1e-10);
  }
}

TEST(XiWeights, GlobalIsRankOneLocalGenericallyNot) {
  Rng rng(RngSeed{38});
  const auto b = random_batch(rng, 4, 5, 5, 3);
  const auto c = make_config(0.1, 0.2);
  const auto g = xi_weights(XiVariant::Global, b.w, c);
  const auto s = xi_weights(XiVariant::LocalImage, b.w, c);
  const auto r = xi_weights(XiVariant::LocalReport, b.w, c);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_LE(rank1_residual(g.xi[i]), 1e-10);
    if (b.zr[i].rows() > 1) {
      EXPECT_GT(rank1_residual(s.xi[i]), 1e-6);
      EXPECT_GT(rank1_residual(r.xi[i]), 1e-6);
    }
  }
}

TEST(XiWeights, SeparableAttentionGivesRankOneReportWeights) {
  Rng rng(RngSeed{39});
  auto b = random_batch(rng, 3, 4, 4, 3);
  for (auto& a : b.w.alpha_sr) {
    const Matrix shared = labtest::stochastic_rows(rng, 1, a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r)
      for (std::size_t col = 0; col < a.cols(); ++col) a(r, col) = shared(0, col);
  }
  const auto r = xi_weights(XiVariant::LocalReport, b.w, make_config(0.1, 0.2));
  for (const auto& x : r.xi) EXPECT_LE(rank1_residual(x), 1e-10);
}

TEST(XiWeights, MissingAttentionIsConfigError) {
  Rng rng(RngSeed{40});
  auto b = random_batch(rng, 2, 3, 3, 3);
  b.w.alpha_rs.clear();
  b.w.alpha_sr.clear();
  EXPECT_THROW(xi_weights(XiVariant::LocalImage, b.w, make_config(0.1, 0.2)), ConfigError);
  EXPECT_THROW(xi_weights(XiVariant::LocalReport, b.w, make_config(0.1, 0.2)), ConfigError);
  EXPECT_NO_THROW(xi_weights(XiVariant::Global, b.w, make_config(0.1, 0.2)));
}

TEST(AlignRewritten, MatchesDirectDotExpansionForAllThreeForms) {
  Rng rng(RngSeed{41});
  for (bool normalized : {true, false}) {
    const auto b = random_batch(rng, 4, 6, 5, 8, normalized);
    const auto c = make_config(0.2, 0.3);
    const GlobalReps g = pooled_reps(b.zs, b.zr, b.w);
    const CrossReps cross = attended_reps(b.zs, b.zr, b.w);
    const double direct_g = decompose_global(g, c, Similarity::Dot).align;
    const double direct_s = decompose_local_image(b.zs, cross, b.w, c, Similarity::Dot).align;
    const double direct_r = decompose_local_report(b.zr, cross, b.w, c, Similarity::Dot).align;
    EXPECT_NEAR(align_rewritten(b.zs, b.zr, xi_weights(XiVariant::Global, b.w, c)), direct_g, 1e-10);
    EXPECT_NEAR(align_rewritten(b.zs, b.zr, xi_weights(XiVariant::LocalImage, b.w, c)), direct_s, 1e-10);
    EXPECT_NEAR(align_rewritten(b.zs, b.zr, xi_weights(XiVariant::LocalReport, b.w, c)), direct_r, 1e-10);
  }
}

TEST(AlignRewritten, CosineSemanticsBreaksTheRewriteOnNonUnitRows) {
  Rng rng(RngSeed{42});
  const auto b = random_batch(rng, 3, 4, 4, 5);
  const auto c = make_config(0.2, 0.2);
  const GlobalReps g = pooled_reps(b.zs, b.zr, b.w);
  const double cos_align = decompose_global(g, c, Similarity::Cosine).align;
  EXPECT_GT(std::abs(cos_align - align_rewritten(b.zs, b.zr, xi_weights(XiVariant::Global, b.w, c))), 1e-3);
}

TEST(AlignRewritten, ShapeMismatchThrows) {
  Rng rng(RngSeed{43});
  const auto b = random_batch(rng, 2, 3, 3, 3);
  auto xi = xi_weights(XiVariant::Global, b.w, make_config(0.1, 0.1));
  xi.xi[0] = Matrix(2, 2, 1.0);
  EXPECT_THROW(align_rewritten(b.zs, b.zr, xi), DimensionError);
}

namespace {

labtest::Batch constant_batch(Rng& rng, std::size_t n, std::size_t k, std::size_t d) {
  auto b = random_batch(rng, n, k, 4, d);
  std::vector<Matrix> s, r;
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix a = labtest::unit_rows(rng.normal_matrix(1, d));
    const Matrix c = labtest::unit_rows(rng.normal_matrix(1, d));
    s.push_back(matmul(Matrix(k, 1, 1.0), a));
    r.push_back(matmul(Matrix(b.zr[i].rows(), 1, 1.0), c));
  }
  return {RaggedBatch(Modality::Image, s), RaggedBatch(Modality::Report, r), b.w};
}

}  // namespace

TEST(ConstantLocalEquivalence, ConstantUnitRowsAgree) {
  Rng rng(RngSeed{44});
  const auto b = constant_batch(rng, 4, 6, 5);
  const auto rep = constant_local_equivalence_check(b.zs, b.zr, b.w, make_config(0.2, 0.2));
  EXPECT_TRUE(rep.violations.empty());
  EXPECT_LE(rep.max_diff, 1e-10);
  EXPECT_TRUE(rep.passed);
}

TEST(ConstantLocalEquivalence, NonConstantRowsDisagreeAndAreReported) {
  Rng rng(RngSeed{45});
  auto b = random_batch(rng, 4, 6, 4, 5);
  std::vector<Matrix> s, r;
  for (const auto& m : b.zs) s.push_back(labtest::unit_rows(m));
  for (const auto& m : b.zr) r.push_back(labtest::unit_rows(m));
  const RaggedBatch zs(Modality::Image, s), zr(Modality::Report, r);
  const auto rep = constant_local_equivalence_check(zs, zr, b.w, make_config(0.2, 0.2));
  EXPECT_FALSE(rep.passed);
  EXPECT_GT(rep.max_diff, 1e-4);
  ASSERT_EQ(rep.violations.size(), 2u);
}

TEST(ConstantLocalEquivalence, TemperatureMismatchScalesLocalTerms) {
  Rng rng(RngSeed{46});
  const auto b = constant_batch(rng, 3, 4, 3);
  const auto rep = constant_local_equivalence_check(b.zs, b.zr, b.w, make_config(0.2, 0.5));
  EXPECT_FALSE(rep.passed);
  ASSERT_EQ(rep.violations.size(), 1u);
  EXPECT_NEAR(rep.local_image / rep.global, 0.2 / 0.5, 1e-12);
  EXPECT_NEAR(rep.local_report / rep.global, 0.2 / 0.5, 1e-12);
}

TEST(ConstantLocalEquivalence, UnnormalizedWeightsReported) {
  Rng rng(RngSeed{47});
  auto b = constant_batch(rng, 2, 3, 3);
  b.w.w_s[0] = scale(b.w.w_s[0], 2.0);
  const auto rep = constant_local_equivalence_check(b.zs, b.zr, b.w, make_config(0.2, 0.2));
  EXPECT_FALSE(rep.passed);
  EXPECT_EQ(rep.violations.size(), 1u);
}

TEST(GaussOffset, OffsetIsInverseTemperature) {
  Rng rng(RngSeed{48});
  std::vector<Matrix> s;
  for (int i = 0; i < 3; ++i) s.push_back(labtest::unit_rows(rng.normal_matrix(5, 4)));
  const RaggedBatch z(Modality::Image, s);
  for (double tp : {0.2, 0.5, 1.0}) {
    const auto f = gauss_offset_identity_check(z, tp);
    EXPECT_NEAR(f.cosine_form - f.distance_form, 1.0 / tp, 1e-12);
    EXPECT_NEAR(f.cosine_form, uni_gauss(z, tp), 1e-12);
  }
}

TEST(GaussOffset, CollapsedAndOrthogonalValues) {
  const RaggedBatch collapsed(Modality::Image, {Matrix::from_rows({{0, 1}, {0, 1}, {0, 1}})});
  const auto c = gauss_offset_identity_check(collapsed, 0.5);
  EXPECT_NEAR(c.distance_form, 0.0, 1e-15);
  EXPECT_NEAR(c.cosine_form, 2.0, 1e-14);
  const RaggedBatch orth(Modality::Image, {Matrix::from_rows({{1, 0}, {0, 1}})});
  const auto o = gauss_offset_identity_check(orth, 1.0);
  EXPECT_NEAR(o.distance_form, -0.37988549304172248, 1e-14);
  EXPECT_NEAR(o.cosine_form, 0.62011450695827752, 1e-14);
}

TEST(GaussOffset, NonUnitRowsRejected) {
  const RaggedBatch z(Modality::Image, {Matrix::from_rows({{1, 0}, {0, 1.001}})});
  EXPECT_THROW(gauss_offset_identity_check(z, 0.5), PreconditionError);
}

TEST(Rank1Residual, OuterProductsAndCounterexamples) {
  const Matrix outer = matmul(Matrix::from_rows({{1}, {-2}, {3}}), Matrix::from_rows({{0.5, 4}}));
  EXPECT_LE(rank1_residual(outer), 1e-15);
  const Matrix zero_total = matmul(Matrix::from_rows({{1}, {-1}}), Matrix::from_rows({{1, -1}}));
  EXPECT_LE(rank1_residual(zero_total), 1e-15);
  EXPECT_GT(rank1_residual(Matrix::identity(2)), 0.4);
  EXPECT_EQ(rank1_residual(Matrix(2, 2, 0.0)), 0.0);
}
