#include <gtest/gtest.h>

#include "smlab/surprise_generator.hpp"

using namespace smlab;

namespace {

Matrix<double> randn(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  RngStream rng(seed, 99);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

SgConfig cfg(SgVariant v) {
  SgConfig c;
  c.variant = v;
  c.obs_dim = 6;
  c.num_actions = 3;
  c.n = 5;
  c.hidden = 16;
  c.seed = 4;
  return c;
}

}  // namespace

TEST(SgLoss, NormExamples) {
  Matrix<double> u(1, 2);
  u << 3, 4;
  EXPECT_DOUBLE_EQ(sg_loss(u), 5.0);
  Matrix<double> v(2, 2);
  v << 1, 0, 0, 1;
  EXPECT_DOUBLE_EQ(sg_loss(v), 1.0);
  EXPECT_DOUBLE_EQ(sg_loss<double>(Matrix<double>::Zero(3, 4)), 0.0);
  EXPECT_THROW(sg_loss<double>(Matrix<double>(0, 2)), UsageError);
}

TEST(SgLoss, ZeroRowGradientIsZero) {
  Matrix<double> u(2, 2);
  u << 0, 0, 3, 4;
  const auto g = sg_loss_grad(u);
  EXPECT_EQ(g(0, 0), 0.0);
  EXPECT_NEAR(g(1, 0), 0.3, 1e-15);
  EXPECT_NEAR(g(1, 1), 0.4, 1e-15);
}

TEST(SurpriseGenerator, WidthsPerVariant) {
  SurpriseGenerator<double> rnd(cfg(SgVariant::rnd)), ae(cfg(SgVariant::ae)), fd(cfg(SgVariant::fd));
  EXPECT_EQ(rnd.input_dim(), 6);
  EXPECT_EQ(rnd.surprise_dim(), 5);
  EXPECT_EQ(ae.input_dim(), 6);
  EXPECT_EQ(ae.surprise_dim(), 6);
  EXPECT_EQ(fd.input_dim(), 9);
  EXPECT_EQ(fd.surprise_dim(), 6);
}

TEST(SurpriseGenerator, FdInputIsPrevObsAndOneHot) {
  SurpriseGenerator<double> fd(cfg(SgVariant::fd));
  RowVector<double> prev = RowVector<double>::LinSpaced(6, 1, 6), obs = RowVector<double>::Zero(6);
  const auto in = fd.make_input(prev, 2, obs);
  ASSERT_EQ(in.size(), 9);
  EXPECT_EQ(in.head(6), prev);
  EXPECT_EQ(in(6), 0.0);
  EXPECT_EQ(in(7), 0.0);
  EXPECT_EQ(in(8), 1.0);
  EXPECT_THROW(fd.make_input(prev, 3, obs), UsageError);
  // Target of fd and ae is the observation itself.
  EXPECT_EQ(fd.make_target(obs), obs);
}

TEST(SurpriseGenerator, BadConfigAndWidths) {
  auto c = cfg(SgVariant::rnd);
  c.obs_dim = 0;
  EXPECT_THROW(SurpriseGenerator<double>{c}, ConfigError);
  c = cfg(SgVariant::fd);
  c.num_actions = 0;
  EXPECT_THROW(SurpriseGenerator<double>{c}, ConfigError);
  SurpriseGenerator<double> sg(cfg(SgVariant::rnd));
  EXPECT_THROW(sg.make_target(Matrix<double>::Zero(1, 7)), UsageError);
  EXPECT_THROW(sg.compute_surprise(Matrix<double>::Zero(2, 6), Matrix<double>::Zero(3, 5)), UsageError);
}

TEST(SurpriseGenerator, SurpriseIsPredictionMinusTarget) {
  SurpriseGenerator<double> sg(cfg(SgVariant::rnd));
  const auto x = randn(4, 6, 1);
  const auto tgt = sg.make_target(x);
  EXPECT_EQ(tgt, sg.target_net().predict(x));
  const auto u = sg.compute_surprise(x, tgt);
  EXPECT_LT((u - (sg.predictor().predict(x) - tgt)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SurpriseGenerator, DeterministicForSeed) {
  SurpriseGenerator<double> a(cfg(SgVariant::rnd)), b(cfg(SgVariant::rnd));
  auto c2 = cfg(SgVariant::rnd);
  c2.seed = 5;
  SurpriseGenerator<double> c(c2);
  EXPECT_EQ(a.target_fingerprint(), b.target_fingerprint());
  EXPECT_NE(a.target_fingerprint(), c.target_fingerprint());
}

class SgTraining : public ::testing::TestWithParam<SgVariant> {};

TEST_P(SgTraining, LossDecreasesAndTargetStaysFrozen) {
  SurpriseGenerator<double> sg(cfg(GetParam()));
  const auto fp = sg.target_fingerprint();
  const auto obs = randn(32, 6, 2);
  Matrix<double> inputs(32, sg.input_dim());
  for (int i = 0; i < 32; ++i) {
    RowVector<double> prev = obs.row((i + 31) % 32);
    inputs.row(i) = sg.make_input(prev, i % 3, obs.row(i));
  }
  const auto targets = sg.make_target(obs);
  const double l0 = sg_loss(sg.compute_surprise(inputs, targets));
  for (int k = 0; k < 100; ++k) {
    sg.loss_and_backward(inputs, targets);
    adam_step<double>(sg.trainable_params(), 1e-2);
  }
  const double l1 = sg_loss(sg.compute_surprise(inputs, targets));
  EXPECT_LT(l1, l0);
  EXPECT_EQ(sg.target_fingerprint(), fp);
}

INSTANTIATE_TEST_SUITE_P(Variants, SgTraining, ::testing::Values(SgVariant::rnd, SgVariant::ae, SgVariant::fd));

TEST(SurpriseGenerator, BackwardMatchesFiniteDifferences) {
  SurpriseGenerator<double> sg(cfg(SgVariant::ae));
  RngStream rng(7, 1);
  for (auto* p : sg.trainable_params()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += 0.3 * rng.normal();
    p->touch();
  }
  const auto x = randn(5, 6, 3);
  const auto t = sg.make_target(x);
  sg.loss_and_backward(x, t);
  auto params = sg.trainable_params();
  std::vector<Matrix<double>> an;
  for (auto* p : params) an.push_back(p->grad);
  const auto num = finite_diff_grad<double>([&] { return sg_loss(sg.compute_surprise(x, t)); },
                                            std::span<Param<double>* const>(params), 1e-6);
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_LT(max_relative_error(an[i], num[i]), 1e-5);
}

TEST(SgVariantNames, RoundTrip) {
  for (auto v : {SgVariant::rnd, SgVariant::ae, SgVariant::fd}) EXPECT_EQ(parse_sg_variant(to_string(v)), v);
  EXPECT_THROW(parse_sg_variant("icm"), ConfigError);
}
