#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "sage/signal.hpp"

namespace {

using namespace sage;

Matrix two_objective(const std::vector<double>& a, const std::vector<double>& b) {
  Matrix m(static_cast<Eigen::Index>(a.size()), 2);
  for (std::size_t g = 0; g < a.size(); ++g) {
    m(static_cast<Eigen::Index>(g), 0) = a[g];
    m(static_cast<Eigen::Index>(g), 1) = b[g];
  }
  return m;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double pop_std(const std::vector<double>& v) {
  const double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / v.size());
}

TEST(SequenceRatio, IdentityIsOne) {
  const std::vector<double> lp{-1.0, -2.5, -0.3};
  EXPECT_EQ(sequence_ratio(lp, lp), 1.0);
}

TEST(SequenceRatio, SymmetricPairCancels) {
  const std::vector<double> old_lp{-1.0, -1.0};
  const std::vector<double> new_lp{-1.0 + std::log(2.0), -1.0 + std::log(0.5)};
  EXPECT_NEAR(sequence_ratio(new_lp, old_lp), 1.0, 1e-15);
}

TEST(SequenceRatio, ConstantRatio) {
  const std::vector<double> old_lp(6, -2.0);
  std::vector<double> new_lp(6, -2.0 + std::log(1.3));
  EXPECT_NEAR(sequence_ratio(new_lp, old_lp), 1.3, 1e-14);
}

TEST(SequenceRatio, Errors) {
  const std::vector<double> a{-1.0, -2.0}, b{-1.0};
  EXPECT_THROW(sequence_ratio(a, b), std::invalid_argument);
  EXPECT_THROW(sequence_ratio(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  const std::vector<double> bad{-1.0, std::nan("")};
  EXPECT_THROW(sequence_ratio(bad, a), std::invalid_argument);
  const std::vector<double> inf{-1.0, -INFINITY};
  EXPECT_THROW(token_ratios(a, inf), std::invalid_argument);
}

TEST(TokenRatios, Basics) {
  const std::vector<double> lp{-0.5, -1.5};
  for (double r : token_ratios(lp, lp)) EXPECT_EQ(r, 1.0);
  const std::vector<double> one_new{-0.2}, one_old{-0.9};
  EXPECT_NEAR(token_ratios(one_new, one_old)[0], sequence_ratio(one_new, one_old), 1e-15);
}

TEST(SequenceRatio, PropertiesOnRandomInputs) {
  Rng rng(31);
  std::normal_distribution<double> normal(-2.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t L = 1 + rng() % 8;
    std::vector<double> a(L), b(L);
    for (std::size_t t = 0; t < L; ++t) {
      a[t] = normal(rng);
      b[t] = normal(rng);
    }
    const double r = sequence_ratio(a, b);
    EXPECT_GT(r, 0.0);
    // L-th root of the product of token ratios.
    double prod = 1.0;
    for (double x : token_ratios(a, b)) prod *= x;
    EXPECT_NEAR(r, std::pow(prod, 1.0 / static_cast<double>(L)), 1e-12 * std::max(1.0, r));
    // Permutation invariance.
    std::vector<std::size_t> perm(L);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> pa(L), pb(L);
    for (std::size_t t = 0; t < L; ++t) {
      pa[t] = a[perm[t]];
      pb[t] = b[perm[t]];
    }
    EXPECT_NEAR(sequence_ratio(pa, pb), r, 1e-12 * std::max(1.0, r));
    // Monotone in each new log-prob.
    const std::size_t t = rng() % L;
    auto bumped = a;
    bumped[t] += 0.1;
    EXPECT_GT(sequence_ratio(bumped, b), r);
  }
}

TEST(GroupNormalize, TwoPointColumn) {
  Matrix m(2, 1);
  m << 1.0, 0.0;
  const Matrix z = group_normalize(m, 0.0);
  EXPECT_EQ(z(0, 0), 1.0);
  EXPECT_EQ(z(1, 0), -1.0);
}

TEST(GroupNormalize, ConstantColumnIsZero) {
  Matrix m(3, 1);
  m << 5.0, 5.0, 5.0;
  const Matrix z = group_normalize(m);
  EXPECT_TRUE(z.isZero(0.0));
}

TEST(GroupNormalize, RejectsSingleSlate) {
  EXPECT_THROW(group_normalize(Matrix::Ones(1, 2)), std::invalid_argument);
}

TEST(GroupNormalize, ZeroMeanColumnsAndScaleRobustness) {
  Rng rng(4);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index G = 2 + static_cast<Eigen::Index>(rng() % 15);
    Matrix m(G, 2);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = normal(rng);
    const Matrix z = group_normalize(m, 0.0);
    for (Eigen::Index c = 0; c < 2; ++c) EXPECT_NEAR(z.col(c).mean(), 0.0, 1e-12);
    Matrix scaled = m;
    scaled.col(1) *= scale(rng);
    EXPECT_LT((group_normalize(scaled, 0.0) - z).cwiseAbs().maxCoeff(), 1e-12);
    const Matrix z_eps = group_normalize(scaled);
    EXPECT_LT((z_eps - z).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(DecoupledAdvantage, Projection) {
  Matrix z(3, 2);
  z << 1.0, 9.0, -2.0, 8.0, 0.5, 7.0;
  const std::vector<double> w{1.0, 0.0};
  const auto a = decoupled_advantage(z, w);
  for (Eigen::Index g = 0; g < 3; ++g) EXPECT_EQ(a[static_cast<std::size_t>(g)], z(g, 0));
  const std::vector<double> zero_w{0.5, 0.5};
  for (double v : decoupled_advantage(Matrix::Zero(3, 2), zero_w)) EXPECT_EQ(v, 0.0);
  const std::vector<double> bad{1.0};
  EXPECT_THROW(decoupled_advantage(z, bad), std::invalid_argument);
}

TEST(Collapse, DecouplingSeparatesSlatesNaiveMerges) {
  const Matrix r = two_objective({1, 0, 1}, {10, 11, 40});
  const std::vector<double> w{0.5, 0.5};
  const auto naive = naive_advantage(r, w);
  EXPECT_EQ(naive[0], naive[1]);

  // Hand oracle: per-column population z-scores.
  const std::vector<double> clicks{1, 0, 1}, time{10, 11, 40};
  std::vector<double> expected(3);
  for (std::size_t g = 0; g < 3; ++g) {
    expected[g] = 0.5 * (clicks[g] - mean_of(clicks)) / (pop_std(clicks) + kDefaultNormEps) +
                  0.5 * (time[g] - mean_of(time)) / (pop_std(time) + kDefaultNormEps);
  }
  const auto dec = decoupled_advantage(group_normalize(r), w);
  for (std::size_t g = 0; g < 3; ++g) EXPECT_NEAR(dec[g], expected[g], 1e-12);
  EXPECT_GT(std::abs(dec[0] - dec[1]), 0.1);
}

TEST(NaiveAdvantage, SingleObjectiveMatchesDecoupled) {
  Matrix r(4, 1);
  r << 3.0, -1.0, 2.0, 7.0;
  const std::vector<double> w{1.0};
  const auto naive = naive_advantage(r, w);
  const auto dec = decoupled_advantage(group_normalize(r), w);
  for (std::size_t g = 0; g < 4; ++g) EXPECT_DOUBLE_EQ(naive[g], dec[g]);
}

TEST(NaiveAdvantage, ConstantSumsAreZero) {
  const Matrix r = two_objective({1, 2, 3}, {3, 2, 1});
  const std::vector<double> w{0.5, 0.5};
  for (double v : naive_advantage(r, w)) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(naive_advantage(Matrix::Ones(1, 2), w), std::invalid_argument);
}

TEST(BatchNormalize, Examples) {
  for (double v : batch_normalize(std::vector<double>{3, 3, 3})) EXPECT_EQ(v, 0.0);
  const auto two = batch_normalize(std::vector<double>{1, 0});
  EXPECT_EQ(two[0], 1.0);
  EXPECT_EQ(two[1], -1.0);
  EXPECT_THROW(batch_normalize(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(BatchNormalize, StandardizesRandomBatches) {
  Rng rng(12);
  std::uniform_real_distribution<double> loc(-100.0, 100.0), spread(1e-3, 1e3);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng() % 300;
    std::normal_distribution<double> normal(loc(rng), spread(rng));
    std::vector<double> xs(n);
    for (auto& x : xs) x = normal(rng);
    const auto z = batch_normalize(xs);
    EXPECT_LT(std::abs(mean_of(z)), 1e-6);
    EXPECT_LT(std::abs(pop_std(z) - 1.0), 1e-6);
  }
}

}  // namespace
