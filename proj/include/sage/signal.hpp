#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "sage/common.hpp"

namespace sage {

inline constexpr double kDefaultNormEps = 1e-8;

namespace detail {

inline void check_ratio_inputs(std::span<const double> new_logps, std::span<const double> old_logps) {
  if (new_logps.size() != old_logps.size()) {
    throw std::invalid_argument("log-prob sequences differ in length");
  }
  if (new_logps.empty()) throw std::invalid_argument("log-prob sequences must be non-empty");
  for (std::size_t t = 0; t < new_logps.size(); ++t) {
    if (!std::isfinite(new_logps[t]) || !std::isfinite(old_logps[t])) {
      throw std::invalid_argument("non-finite log-prob at position " + std::to_string(t));
    }
  }
}

}  // namespace detail

/// Geometric mean of per-position probability ratios:
/// exp(mean_t(new_logps[t] - old_logps[t])).
inline double sequence_ratio(std::span<const double> new_logps, std::span<const double> old_logps) {
  detail::check_ratio_inputs(new_logps, old_logps);
  double acc = 0.0;
  for (std::size_t t = 0; t < new_logps.size(); ++t) acc += new_logps[t] - old_logps[t];
  return std::exp(acc / static_cast<double>(new_logps.size()));
}

/// Per-position ratios exp(new - old), the token-level counterpart.
inline std::vector<double> token_ratios(std::span<const double> new_logps, std::span<const double> old_logps) {
  detail::check_ratio_inputs(new_logps, old_logps);
  std::vector<double> out(new_logps.size());
  for (std::size_t t = 0; t < new_logps.size(); ++t) out[t] = std::exp(new_logps[t] - old_logps[t]);
  return out;
}

/// Column-wise z-scores within one group: (R - mean) / (population std + eps).
/// Rows are slates, columns are objectives. Constant columns map to zeros.
inline Matrix group_normalize(const Matrix& group_rewards, double eps = kDefaultNormEps) {
  if (group_rewards.rows() < 2) throw std::invalid_argument("group_normalize needs at least 2 slates");
  if (eps < 0.0) throw std::invalid_argument("eps must be nonnegative");
  Matrix z(group_rewards.rows(), group_rewards.cols());
  std::vector<double> col(static_cast<std::size_t>(group_rewards.rows()));
  for (Eigen::Index m = 0; m < group_rewards.cols(); ++m) {
    for (Eigen::Index g = 0; g < group_rewards.rows(); ++g) col[static_cast<std::size_t>(g)] = group_rewards(g, m);
    const bool constant = std::all_of(col.begin(), col.end(), [&](double v) { return v == col.front(); });
    if (constant) {
      z.col(m).setZero();
      continue;
    }
    const Moments mo = population_moments(col);
    for (Eigen::Index g = 0; g < group_rewards.rows(); ++g) {
      z(g, m) = (group_rewards(g, m) - mo.mean) / (mo.stddev + eps);
    }
  }
  return z;
}

/// Weighted sum of per-objective z-scores. Weights need not sum to one.
inline std::vector<double> decoupled_advantage(const Matrix& z, std::span<const double> weights) {
  if (static_cast<Eigen::Index>(weights.size()) != z.cols()) {
    throw std::invalid_argument("one weight per objective required");
  }
  std::vector<double> out(static_cast<std::size_t>(z.rows()), 0.0);
  for (Eigen::Index g = 0; g < z.rows(); ++g) {
    double a = 0.0;
    for (Eigen::Index m = 0; m < z.cols(); ++m) a += weights[static_cast<std::size_t>(m)] * z(g, m);
    out[static_cast<std::size_t>(g)] = a;
  }
  return out;
}

/// Batch-level z-score. A batch whose population std is at most `eps`
/// (in particular an all-equal batch) maps to all zeros.
inline std::vector<double> batch_normalize(std::span<const double> advantages, double eps = kDefaultNormEps) {
  if (advantages.size() < 2) throw std::invalid_argument("batch_normalize needs at least 2 values");
  std::vector<double> out(advantages.size(), 0.0);
  const Moments mo = population_moments(advantages);
  const bool constant =
      std::all_of(advantages.begin(), advantages.end(), [&](double v) { return v == advantages.front(); });
  if (constant || !(mo.stddev > eps)) return out;
  for (std::size_t k = 0; k < advantages.size(); ++k) out[k] = (advantages[k] - mo.mean) / mo.stddev;
  return out;
}

/// The rejected baseline: z-score of the pre-summed weighted reward.
/// Distinct reward vectors with equal weighted sums collapse to one value.
inline std::vector<double> naive_advantage(const Matrix& group_rewards, std::span<const double> weights,
                                           double eps = kDefaultNormEps) {
  if (group_rewards.rows() < 2) throw std::invalid_argument("naive_advantage needs at least 2 slates");
  if (static_cast<Eigen::Index>(weights.size()) != group_rewards.cols()) {
    throw std::invalid_argument("one weight per objective required");
  }
  Matrix summed(group_rewards.rows(), 1);
  for (Eigen::Index g = 0; g < group_rewards.rows(); ++g) {
    double s = 0.0;
    for (Eigen::Index m = 0; m < group_rewards.cols(); ++m) s += weights[static_cast<std::size_t>(m)] * group_rewards(g, m);
    summed(g, 0) = s;
  }
  const Matrix z = group_normalize(summed, eps);
  return std::vector<double>(z.data(), z.data() + z.size());
}

}  // namespace sage
