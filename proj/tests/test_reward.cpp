#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "smlab/reward.hpp"
#include "smlab/rng.hpp"

using namespace smlab;

namespace {

// Two-pass population std.
double batch_std(const std::vector<double>& xs) {
  double m = 0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0;
  for (double x : xs) v += (x - m) * (x - m);
  return std::sqrt(v / static_cast<double>(xs.size()));
}

}  // namespace

TEST(RunningStd, EmptyAndSingle) {
  RunningStd s;
  EXPECT_EQ(s.stddev(), 0.0);
  s.push(3.0);
  EXPECT_EQ(s.stddev(), 0.0);
  EXPECT_EQ(s.mean(), 3.0);
}

TEST(RunningStd, MatchesTwoPass) {
  RngStream rng(1, 1);
  RunningStd s;
  std::vector<double> xs;
  for (int i = 0; i < 10000; ++i) {
    xs.push_back(100.0 + rng.normal() * 3.0);
    s.push(xs.back());
  }
  EXPECT_LT(std::abs(s.stddev() - batch_std(xs)) / batch_std(xs), 1e-9);
}

TEST(Normalizer, ZeroStream) {
  RewardNormalizer n({1.0, 0.99, 1e-8}, 1);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(n.normalize(0.0, 0, false), 0.0);
  EXPECT_EQ(n.r_std(), 0.0);
  EXPECT_EQ(n.returns()[0], 0.0);
}

TEST(Normalizer, ConstantStreamMatchesOffline) {
  const double c = 0.3;
  RewardNormalizer n({1.0, 0.99, 1e-8}, 1);
  std::vector<double> rets;
  double R = 0;
  double last = 0;
  for (int i = 0; i < 3000; ++i) {
    last = n.normalize(c, 0, false);
    R = 0.99 * R + c;
    rets.push_back(R);
  }
  EXPECT_NEAR(n.returns()[0], 100 * c, 1e-9);
  EXPECT_LT(std::abs(n.r_std() - batch_std(rets)), 1e-9 * batch_std(rets));
  EXPECT_DOUBLE_EQ(last, c / n.r_std());
}

TEST(Normalizer, InterleavedActorsMatchConcatenatedStream) {
  RngStream rng(2, 1);
  RewardNormalizer n({1.0, 0.9, 1e-8}, 2);
  double R[2] = {0, 0};
  std::vector<double> seq;
  for (int t = 0; t < 500; ++t)
    for (int a = 0; a < 2; ++a) {
      const double r = std::abs(rng.normal());
      const bool done = rng.uniform() < 0.05;
      const double out = n.normalize(r, a, done);
      EXPECT_TRUE(std::isfinite(out));
      R[a] = 0.9 * R[a] + r;
      seq.push_back(R[a]);
      if (done) R[a] = 0;
    }
  EXPECT_LT(std::abs(n.r_std() - batch_std(seq)), 1e-9 * batch_std(seq));
}

TEST(Normalizer, ReturnResetsOnDone) {
  RewardNormalizer n({1.0, 0.99, 1e-8}, 1);
  n.normalize(1.0, 0, false);
  n.normalize(1.0, 0, true);
  EXPECT_EQ(n.returns()[0], 0.0);
  EXPECT_THROW(n.normalize(1.0, 1, false), UsageError);
}

TEST(Normalizer, BadConfig) {
  EXPECT_THROW(RewardNormalizer({-1.0, 0.99, 1e-8}, 1), ConfigError);
  EXPECT_THROW(RewardNormalizer({1.0, 1.5, 1e-8}, 1), ConfigError);
  EXPECT_THROW(RewardNormalizer({1.0, 0.99, 0.0}, 1), ConfigError);
}

TEST(Combine, Examples) {
  EXPECT_EQ(combine(0.7, 123.0, 0.0), 0.7);
  EXPECT_EQ(combine(0.0, 0.5, 1.0), 0.5);
  EXPECT_EQ(combine(1.0, 0.25, 1.0), 1.25);
}

TEST(Mnir, Examples) {
  for (double v : mnir(std::vector<double>{2.5, 2.5, 2.5})) EXPECT_EQ(v, 0.0);
  const auto m = mnir(std::vector<double>{1, 2, 3});
  EXPECT_NEAR(m[0], -1.22474, 1e-5);
  EXPECT_NEAR(m[1], 0.0, 1e-15);
  EXPECT_NEAR(m[2], 1.22474, 1e-5);
  EXPECT_THROW(mnir(std::vector<double>{}), UsageError);
}

TEST(Mnir, PermutationAndMoments) {
  RngStream rng(3, 1);
  std::vector<double> x(57);
  for (double& v : x) v = rng.normal() * 4 + 1;
  const auto m = mnir(x);
  double mean = 0, sq = 0;
  for (double v : m) mean += v;
  mean /= 57;
  for (double v : m) sq += (v - mean) * (v - mean);
  EXPECT_LT(std::abs(mean), 1e-12);
  EXPECT_LT(std::abs(std::sqrt(sq / 57) - 1), 1e-12);
  std::vector<double> y(x.rbegin(), x.rend());
  const auto my = mnir(y);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(my[i], m[x.size() - 1 - i], 1e-14);
}
