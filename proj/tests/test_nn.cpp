#include <gtest/gtest.h>

#include <cmath>

#include "smlab/nn.hpp"
#include "smlab/rng.hpp"

using namespace smlab;

namespace {

Matrix<double> randn(Eigen::Index r, Eigen::Index c, RngStream& rng) {
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

void randomize(Mlp<double>& net, RngStream& rng) {
  for (auto* p : net.params()) {
    p->value = randn(p->rows(), p->cols(), rng);
    p->touch();
  }
}

// Scalar Adam written out independently of the library.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double x, double g, double lr) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    return x - lr * mh / (std::sqrt(vh) + 1e-8);
  }
};

}  // namespace

TEST(Rng, FrozenSequencesFromIndependentReimplementation) {
  RngStream a(0, 1);
  EXPECT_EQ(a.next_u64(), 7388342817035276677ULL);
  EXPECT_EQ(a.next_u64(), 4545212641288567318ULL);
  EXPECT_EQ(a.next_u64(), 3106954971137071530ULL);
  EXPECT_DOUBLE_EQ(a.uniform(), 0.19000790860584593);
  RngStream b(42, 7);
  EXPECT_EQ(b.next_u64(), 18138545705407861858ULL);
  EXPECT_EQ(b.next_u64(), 861050644496427922ULL);
  EXPECT_EQ(b.next_u64(), 4291004990848334397ULL);
  EXPECT_DOUBLE_EQ(b.uniform(), 0.6098803483890841);
  EXPECT_EQ(splitmix64(0), 16294208416658607535ULL);
}

TEST(Rng, SameKeySameDrawsDifferentStreamDiffers) {
  RngStream a(9, 3), b(9, 3), c(9, 4);
  bool differ = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    differ = differ || x != c.normal();
  }
  EXPECT_TRUE(differ);
}

TEST(Rng, BelowStaysInRangeAndNormalMomentsAreSane) {
  RngStream r(1, 1);
  double s = 0, s2 = 0;
  for (int i = 0; i < 20000; ++i) {
    EXPECT_LT(r.below(7), 7u);
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / 20000, 0.0, 0.05);
  EXPECT_NEAR(s2 / 20000, 1.0, 0.05);
}

TEST(MlpForward, ZeroNetGivesZeros) {
  auto net = Mlp<double>::make("z", {3, 4, 2}, Activation::tanh);
  RngStream rng(1, 1);
  EXPECT_TRUE(net.predict(randn(5, 3, rng)).isZero(0.0));
}

TEST(MlpForward, IdentityLayer) {
  Mlp<double> net("id", {LayerSpec{3, 3, Activation::identity, true}});
  net.layer(0).weight.value = Matrix<double>::Identity(3, 3);
  Matrix<double> x(1, 3);
  x << 1.5, -2.0, 0.25;
  EXPECT_EQ(net.predict(x), x);
}

TEST(MlpForward, MatchesStraightLineComposition) {
  RngStream rng(2, 1);
  auto net = Mlp<double>::make("r", {3, 5, 2}, Activation::tanh);
  randomize(net, rng);
  const Matrix<double> x = randn(4, 3, rng);
  const Matrix<double> y = net.predict(x);
  const auto& W1 = net.layer(0).weight.value;
  const auto& b1 = net.layer(0).bias.value;
  const auto& W2 = net.layer(1).weight.value;
  const auto& b2 = net.layer(1).bias.value;
  for (int r = 0; r < 4; ++r) {
    double h[5];
    for (int j = 0; j < 5; ++j) {
      double s = b1(0, j);
      for (int i = 0; i < 3; ++i) s += x(r, i) * W1(i, j);
      h[j] = std::tanh(s);
    }
    for (int k = 0; k < 2; ++k) {
      double s = b2(0, k);
      for (int j = 0; j < 5; ++j) s += h[j] * W2(j, k);
      EXPECT_LT(std::abs(s - y(r, k)), 1e-12);
    }
  }
  MlpCache<double> cache;
  EXPECT_EQ(net.forward(x, cache), y);
}

TEST(MlpForward, DimensionErrors) {
  EXPECT_THROW(Mlp<double>("bad", {LayerSpec{3, 4}, LayerSpec{5, 2}}), ConfigError);
  auto net = Mlp<double>::make("n", {3, 2}, Activation::identity);
  EXPECT_THROW(net.predict(Matrix<double>::Zero(1, 4)), ConfigError);
}

TEST(MlpBackward, ZeroOutputGrad) {
  RngStream rng(3, 1);
  auto net = Mlp<double>::make("n", {3, 4, 2}, Activation::tanh);
  randomize(net, rng);
  MlpCache<double> cache;
  net.forward(randn(2, 3, rng), cache);
  const Matrix<double> gx = net.backward(cache, Matrix<double>::Zero(2, 2));
  EXPECT_TRUE(gx.isZero(0.0));
  for (auto* p : net.params()) EXPECT_TRUE(p->grad.isZero(0.0));
}

TEST(MlpBackward, IdentityLayerSumLoss) {
  RngStream rng(4, 1);
  Mlp<double> net("id", {LayerSpec{3, 2, Activation::identity, true}});
  randomize(net, rng);
  const Matrix<double> x = randn(4, 3, rng);
  MlpCache<double> cache;
  net.forward(x, cache);
  net.backward(cache, Matrix<double>::Ones(4, 2));
  const auto& g = net.layer(0).weight.grad;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(g(i, k), x.col(i).sum(), 1e-14);
  EXPECT_NEAR(net.layer(0).bias.grad(0, 0), 4.0, 1e-14);
}

TEST(MlpBackward, MatchesFiniteDifferences) {
  for (Activation act : {Activation::tanh, Activation::relu}) {
    RngStream rng(5, static_cast<int>(act));
    auto net = Mlp<double>::make("n", {4, 6, 5, 3}, act);
    randomize(net, rng);
    const Matrix<double> x = randn(3, 4, rng);
    const Matrix<double> w = randn(3, 3, rng);
    MlpCache<double> cache;
    net.forward(x, cache);
    const Matrix<double> gx = net.backward(cache, w);
    std::vector<Matrix<double>> analytic;
    for (auto* p : net.params()) analytic.push_back(p->grad);
    auto params = net.params();
    const auto numeric = finite_diff_grad<double>([&] { return (net.predict(x).array() * w.array()).sum(); },
                                                  std::span<Param<double>* const>(params), 1e-6);
    for (std::size_t i = 0; i < params.size(); ++i) EXPECT_LT(max_relative_error(analytic[i], numeric[i]), 1e-5);
    // Input gradient by finite differences as well.
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Matrix<double> xp = x, xm = x;
      xp.data()[i] += 1e-6;
      xm.data()[i] -= 1e-6;
      const double num = ((net.predict(xp).array() - net.predict(xm).array()) * w.array()).sum() / 2e-6;
      EXPECT_NEAR(gx.data()[i], num, 1e-6);
    }
  }
}

TEST(MlpBackward, StaleOrForeignCacheIsUsageError) {
  RngStream rng(6, 1);
  auto a = Mlp<double>::make("a", {2, 2}, Activation::tanh);
  auto b = Mlp<double>::make("b", {2, 2}, Activation::tanh);
  MlpCache<double> cache;
  a.forward(randn(1, 2, rng), cache);
  EXPECT_THROW(b.backward(cache, Matrix<double>::Ones(1, 2)), UsageError);
  a.layer(0).weight.value(0, 0) += 1;
  a.layer(0).weight.touch();
  EXPECT_THROW(a.backward(cache, Matrix<double>::Ones(1, 2)), UsageError);
  MlpCache<double> fresh;
  a.forward(randn(1, 2, rng), fresh);
  EXPECT_THROW(a.backward(fresh, Matrix<double>::Ones(2, 2)), UsageError);
}

TEST(MlpInit, GlorotBoundsZeroBiasAndDeterminism) {
  auto a = Mlp<double>::make("a", {10, 20, 5}, Activation::tanh);
  auto b = Mlp<double>::make("a", {10, 20, 5}, Activation::tanh);
  a.init(3, 1);
  b.init(3, 1);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& w = a.layer(i).weight.value;
    const double lim = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    EXPECT_LE(w.cwiseAbs().maxCoeff(), lim);
    EXPECT_TRUE(a.layer(i).bias.value.isZero(0.0));
    EXPECT_EQ(w, b.layer(i).weight.value);
  }
  b.init(4, 1);
  EXPECT_NE(a.layer(0).weight.value, b.layer(0).weight.value);
}

TEST(Adam, ZeroGradIsIdentity) {
  Param<double> p("p", 2, 2);
  p.value << 1, 2, 3, 4;
  const Matrix<double> before = p.value;
  adam_step<double>(std::vector<Param<double>*>{&p}, 1e-3);
  EXPECT_EQ(p.value, before);
}

TEST(Adam, ScalarReferenceFirstStep) {
  Param<double> p("s", 1, 1);
  p.value(0, 0) = 0.5;
  p.grad(0, 0) = 1.0;
  adam_step<double>(std::vector<Param<double>*>{&p}, 1e-3);
  ScalarAdam ref;
  EXPECT_EQ(p.value(0, 0), ref.step(0.5, 1.0, 1e-3));
  EXPECT_NEAR(p.value(0, 0), 0.5 - 1e-3 / (1 + 1e-8), 1e-15);
  EXPECT_EQ(p.grad(0, 0), 0.0);
  EXPECT_EQ(p.step_count, 1u);
}

TEST(Adam, TwoStepTrajectory) {
  Param<double> p("s", 1, 1);
  p.value(0, 0) = -0.3;
  ScalarAdam ref;
  double x = -0.3;
  for (int k = 0; k < 2; ++k) {
    p.grad(0, 0) = 0.7;
    adam_step<double>(std::vector<Param<double>*>{&p}, 1e-2);
    x = ref.step(x, 0.7, 1e-2);
    EXPECT_LT(std::abs(p.value(0, 0) - x), 1e-14);
  }
}

TEST(Adam, NonFiniteGradNamesParameter) {
  Param<double> p("layer.weight", 1, 2);
  p.grad(0, 1) = std::nan("");
  try {
    adam_step<double>(std::vector<Param<double>*>{&p}, 1e-3);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
  }
}

TEST(FiniteDiff, QuadraticAndConstant) {
  Param<double> p("t", 1, 3);
  p.value << 0.5, -1.0, 2.0;
  std::vector<Param<double>*> ps{&p};
  const auto g = finite_diff_grad<double>([&] { return 0.5 * p.value.squaredNorm(); },
                                          std::span<Param<double>* const>(ps), 1e-6);
  EXPECT_LT((g[0] - p.value).cwiseAbs().maxCoeff(), 1e-9);
  const auto c = finite_diff_grad<double>([] { return 3.0; }, std::span<Param<double>* const>(ps), 1e-6);
  EXPECT_LT(c[0].cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Fingerprint, DetectsAnyBitChange) {
  Param<double> p("p", 2, 2);
  p.value << 1, 2, 3, 4;
  const auto h = fingerprint<double>({&p});
  p.value(1, 1) = std::nextafter(4.0, 5.0);
  EXPECT_NE(h, fingerprint<double>({&p}));
}

TEST(Precision, FloatNetsRun) {
  auto net = Mlp<float>::make("f", {3, 4, 2}, Activation::tanh);
  net.init(1, 1);
  Matrix<float> x = Matrix<float>::Ones(2, 3);
  MlpCache<float> cache;
  const auto y = net.forward(x, cache);
  net.backward(cache, Matrix<float>::Ones(2, 2));
  EXPECT_TRUE(y.allFinite());
}
