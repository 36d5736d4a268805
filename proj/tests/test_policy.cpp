#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "sage/checkpoint.hpp"
#include "sage/policy.hpp"
#include "sage/signal.hpp"

namespace {

using namespace sage;

PolicyParams zero_params(int n_users, int n_items, int d) {
  PolicyParams p;
  p.user_embeddings = Matrix::Zero(n_users, d);
  p.item_embeddings = Matrix::Zero(n_items, d);
  p.item_bias = Vector::Zero(n_items);
  return p;
}

PolicyParams random_params(int n_users, int n_items, int d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  PolicyParams p = zero_params(n_users, n_items, d);
  for (Eigen::Index k = 0; k < p.user_embeddings.size(); ++k) p.user_embeddings.data()[k] = normal(rng);
  for (Eigen::Index k = 0; k < p.item_embeddings.size(); ++k) p.item_embeddings.data()[k] = normal(rng);
  for (Eigen::Index k = 0; k < p.item_bias.size(); ++k) p.item_bias[k] = normal(rng);
  return p;
}

std::vector<ItemId> random_slate(int n_items, int L, Rng& rng) {
  std::vector<ItemId> all(static_cast<std::size_t>(n_items));
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(L));
  return all;
}

// Direct masked-softmax evaluation in long double, one full pass per position.
std::vector<double> brute_force_logps(const PolicyParams& p, UserId u, const std::vector<ItemId>& items) {
  std::vector<long double> z(static_cast<std::size_t>(p.n_items()));
  for (int j = 0; j < p.n_items(); ++j) {
    long double s = p.item_bias[j];
    for (int k = 0; k < p.dim(); ++k) s += static_cast<long double>(p.user_embeddings(u, k)) * p.item_embeddings(j, k);
    z[static_cast<std::size_t>(j)] = s;
  }
  std::vector<double> out;
  std::vector<bool> masked(z.size(), false);
  for (ItemId i : items) {
    long double denom = 0.0L;
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (!masked[j]) denom += std::exp(z[j]);
    }
    out.push_back(static_cast<double>(z[static_cast<std::size_t>(i)] - std::log(denom)));
    masked[static_cast<std::size_t>(i)] = true;
  }
  return out;
}

// Flatten every parameter the gradient covers, in a fixed order.
std::vector<double*> param_slots(PolicyParams& p) {
  std::vector<double*> slots;
  for (Eigen::Index k = 0; k < p.user_embeddings.size(); ++k) slots.push_back(p.user_embeddings.data() + k);
  for (Eigen::Index k = 0; k < p.item_embeddings.size(); ++k) slots.push_back(p.item_embeddings.data() + k);
  for (Eigen::Index k = 0; k < p.item_bias.size(); ++k) slots.push_back(p.item_bias.data() + k);
  return slots;
}

std::vector<double> flatten(const Gradient& g) {
  std::vector<double> v(g.user_embeddings.data(), g.user_embeddings.data() + g.user_embeddings.size());
  v.insert(v.end(), g.item_embeddings.data(), g.item_embeddings.data() + g.item_embeddings.size());
  v.insert(v.end(), g.item_bias.data(), g.item_bias.data() + g.item_bias.size());
  return v;
}

TEST(InitPolicy, RejectsZeroDimensions) {
  EXPECT_THROW(init_policy(0, 10, 4, 1), std::invalid_argument);
  EXPECT_THROW(init_policy(2, 0, 4, 1), std::invalid_argument);
  EXPECT_THROW(init_policy(2, 10, 0, 1), std::invalid_argument);
}

TEST(InitPolicy, SeededAndFinite) {
  const auto a = init_policy(2, 10, 4, 7);
  const auto b = init_policy(2, 10, 4, 7);
  EXPECT_TRUE(a.all_finite());
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == init_policy(2, 10, 4, 8));
  EXPECT_EQ(a.dim(), 4);
  EXPECT_EQ(a.n_items(), 10);
}

TEST(InitPolicy, PopularityBiasFromLog) {
  // Counts 9 / 1 / 0 over 10 interactions -> log((c+1)/13).
  InteractionLog log;
  for (int k = 0; k < 9; ++k) log.push_back({0, 0, k});
  log.push_back({1, 1, 9});
  const auto p = init_policy(2, 3, 2, 1, log);
  EXPECT_NEAR(p.item_bias[0], std::log(10.0 / 13.0), 1e-15);
  EXPECT_NEAR(p.item_bias[1], std::log(2.0 / 13.0), 1e-15);
  EXPECT_NEAR(p.item_bias[2], std::log(1.0 / 13.0), 1e-15);
  EXPECT_GT(p.item_bias[0], p.item_bias[1]);
  EXPECT_GT(p.item_bias[0], p.item_bias[2]);
}

TEST(NextItemDistribution, ZeroParamsAreUniform) {
  const auto p = zero_params(1, 4, 3);
  const Vector d = next_item_distribution(p, 0, {}, 2);
  for (int j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(d[j], 0.25);
  const std::vector<ItemId> prefix{0};
  const Vector d1 = next_item_distribution(p, 0, prefix, 2);
  EXPECT_EQ(d1[0], 0.0);
  for (int j = 1; j < 4; ++j) EXPECT_NEAR(d1[j], 1.0 / 3.0, 1e-15);
}

TEST(NextItemDistribution, BiasLn2GivesTwoThirds) {
  auto p = zero_params(1, 2, 1);
  p.item_bias[0] = std::log(2.0);
  const Vector d = next_item_distribution(p, 0, {}, 1);
  EXPECT_NEAR(d[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(d[1], 1.0 / 3.0, 1e-15);
}

TEST(NextItemDistribution, FullPrefixIsStateError) {
  const auto p = zero_params(1, 4, 2);
  const std::vector<ItemId> prefix{0, 1};
  EXPECT_THROW(next_item_distribution(p, 0, prefix, 2), std::logic_error);
}

TEST(NextItemDistribution, SumsToOneAndZeroOnPrefix) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 19);
    const auto p = random_params(3, n, 1 + static_cast<int>(rng() % 8), rng);
    const int L = 1 + static_cast<int>(rng() % std::min(n, 6));
    const auto prefix = random_slate(n, static_cast<int>(rng() % L), rng);
    const Vector d = next_item_distribution(p, static_cast<UserId>(rng() % 3), prefix, L);
    EXPECT_NEAR(d.sum(), 1.0, 1e-12);
    for (ItemId i : prefix) EXPECT_EQ(d[i], 0.0);
  }
}

TEST(SampleSlate, ExhaustsCatalog) {
  Rng rng(3);
  const auto p = init_policy(1, 5, 3, 9);
  auto s = sample_slate(p, 0, 5, rng);
  std::sort(s.items.begin(), s.items.end());
  EXPECT_EQ(s.items, (std::vector<ItemId>{0, 1, 2, 3, 4}));
}

TEST(SampleSlate, RejectsSlateLongerThanCatalog) {
  Rng rng(3);
  EXPECT_THROW(sample_slate(init_policy(1, 3, 2, 1), 0, 4, rng), std::invalid_argument);
}

TEST(SampleSlate, SeededDeterminism) {
  const auto p = init_policy(2, 30, 4, 5);
  Rng a(42), b(42);
  const auto sa = sample_slate(p, 1, 6, a);
  const auto sb = sample_slate(p, 1, 6, b);
  EXPECT_EQ(sa.items, sb.items);
  EXPECT_EQ(sa.logps, sb.logps);
}

TEST(SampleSlate, UniformFrequenciesWithinThreeSigma) {
  const auto p = zero_params(1, 4, 2);
  Rng rng(2024);
  constexpr int n = 100000;
  std::vector<int> counts(4, 0);
  for (int k = 0; k < n; ++k) ++counts[static_cast<std::size_t>(sample_slate(p, 0, 1, rng).items[0])];
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int c : counts) EXPECT_LT(std::abs(c - n * 0.25), 3.0 * sigma);
}

TEST(SlateLogProb, UniformTwoPositions) {
  const auto p = zero_params(1, 4, 2);
  const std::vector<ItemId> items{2, 0};
  const auto lp = slate_log_prob(p, 0, items);
  EXPECT_NEAR(lp.total, std::log(0.25) + std::log(1.0 / 3.0), 1e-15);
  EXPECT_DOUBLE_EQ(lp.total, lp.per_position[0] + lp.per_position[1]);
}

TEST(SlateLogProb, RepeatedItemRejected) {
  const auto p = zero_params(1, 4, 2);
  const std::vector<ItemId> items{1, 1};
  EXPECT_THROW(slate_log_prob(p, 0, items), std::invalid_argument);
  EXPECT_THROW(log_prob_grad(p, 0, items), std::invalid_argument);
}

TEST(SlateLogProb, MatchesBruteForceAndSampledLogps) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 6 + static_cast<int>(rng() % 15);
    const auto p = random_params(2, n, 1 + static_cast<int>(rng() % 8), rng);
    const int L = 1 + static_cast<int>(rng() % 6);
    const auto sampled = sample_slate(p, 1, L, rng);
    const auto lp = slate_log_prob(p, 1, sampled.items);
    const auto oracle = brute_force_logps(p, 1, sampled.items);
    for (int t = 0; t < L; ++t) {
      EXPECT_NEAR(lp.per_position[static_cast<std::size_t>(t)], sampled.logps[static_cast<std::size_t>(t)], 1e-12);
      EXPECT_NEAR(lp.per_position[static_cast<std::size_t>(t)], oracle[static_cast<std::size_t>(t)], 1e-12);
      EXPECT_LE(lp.per_position[static_cast<std::size_t>(t)], 0.0);
    }
  }
}

TEST(LogProbGrad, TwoItemHandValue) {
  const auto p = zero_params(1, 2, 1);
  const std::vector<ItemId> items{0};
  const auto g = log_prob_grad(p, 0, items);
  EXPECT_DOUBLE_EQ(g.item_bias[0], 0.5);
  EXPECT_DOUBLE_EQ(g.item_bias[1], -0.5);
}

TEST(LogProbGrad, UnreachableItemHasZeroBiasGradient) {
  auto p = zero_params(1, 5, 2);
  p.item_bias[4] = -1e4;  // exp underflows: probability exactly 0 everywhere
  const std::vector<ItemId> items{0, 2, 1};
  const auto g = log_prob_grad(p, 0, items);
  EXPECT_EQ(g.item_bias[4], 0.0);
  EXPECT_TRUE(g.item_embeddings.row(4).isZero(0.0));
}

// Norm-wise relative error ||a - f|| / max(||a||, ||f||) against central
// differences of the total log-probability.
TEST(LogProbGrad, MatchesCentralFiniteDifferences) {
  Rng rng(77);
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + static_cast<int>(rng() % 16);
    const int d = 1 + static_cast<int>(rng() % 8);
    const int L = 1 + static_cast<int>(rng() % std::min(n, 6));
    auto p = random_params(2, n, d, rng);
    const auto items = random_slate(n, L, rng);
    const auto analytic = flatten(log_prob_grad(p, 0, items));
    auto slots = param_slots(p);
    ASSERT_EQ(slots.size(), analytic.size());
    double num = 0.0, den_a = 0.0, den_f = 0.0;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const double saved = *slots[k];
      *slots[k] = saved + h;
      const double up = slate_log_prob(p, 0, items).total;
      *slots[k] = saved - h;
      const double down = slate_log_prob(p, 0, items).total;
      *slots[k] = saved;
      const double fd = (up - down) / (2.0 * h);
      num += (analytic[k] - fd) * (analytic[k] - fd);
      den_a += analytic[k] * analytic[k];
      den_f += fd * fd;
    }
    const double rel = std::sqrt(num) / std::max({std::sqrt(den_a), std::sqrt(den_f), 1e-300});
    worst = std::max(worst, rel);
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(LogProbGrad, WeightedAccumulationIsLinear) {
  Rng rng(8);
  const auto p = random_params(2, 12, 3, rng);
  const auto items = random_slate(12, 4, rng);
  const SlateEvaluation eval(p, 1, items);
  Gradient weighted = Gradient::zeros_like(p);
  const std::vector<double> w(4, 0.25);
  eval.accumulate_gradient(p, w, weighted);
  Gradient full = log_prob_grad(p, 1, items);
  full *= 0.25;
  EXPECT_LT(weighted.max_abs_diff(full), 1e-14);
}

TEST(LogProbGrad, BitwiseDeterministic) {
  Rng rng(9);
  const auto p = random_params(2, 15, 4, rng);
  const auto items = random_slate(15, 6, rng);
  const auto a = log_prob_grad(p, 1, items);
  const auto b = log_prob_grad(p, 1, items);
  EXPECT_EQ(a.max_abs_diff(b), 0.0);
}

TEST(Snapshot, IsImmutableCopy) {
  auto p = init_policy(2, 8, 3, 4);
  const FrozenPolicy frozen = snapshot(p);
  EXPECT_TRUE(frozen.params() == p);
  const std::vector<ItemId> items{3, 1, 7};
  const auto before = slate_log_prob(frozen.params(), 0, items);
  p.item_bias.array() += 1.5;
  p.item_embeddings *= 2.0;
  const auto after = slate_log_prob(frozen.params(), 0, items);
  EXPECT_EQ(before.per_position, after.per_position);
  EXPECT_FALSE(frozen.params() == p);
  EXPECT_EQ(sequence_ratio(after.per_position, before.per_position), 1.0);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto p = init_policy(3, 11, 5, 1234);
  const auto path = (std::filesystem::temp_directory_path() / "sage_ckpt_test.json").string();
  save_checkpoint(p, path);
  const auto q = load_checkpoint(path);
  EXPECT_TRUE(p == q);
  std::remove(path.c_str());
}

}  // namespace
