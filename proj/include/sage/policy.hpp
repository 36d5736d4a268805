#pragma once

#include <algorithm>
#include <bit>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sage/common.hpp"
#include "sage/interaction_log.hpp"

namespace sage {

/// Bilinear user-item scorer with an item bias. Logits are
/// score(u, i) = <user_embeddings[u], item_embeddings[i]> + item_bias[i].
struct PolicyParams {
  Matrix user_embeddings;  // n_users x d
  Matrix item_embeddings;  // n_items x d
  Vector item_bias;        // n_items
  std::uint64_t seed = 0;  // provenance only

  int n_users() const { return static_cast<int>(user_embeddings.rows()); }
  int n_items() const { return static_cast<int>(item_embeddings.rows()); }
  int dim() const { return static_cast<int>(item_embeddings.cols()); }

  bool all_finite() const {
    return user_embeddings.allFinite() && item_embeddings.allFinite() && item_bias.allFinite();
  }

  /// Bitwise comparison of every tensor entry and the provenance seed.
  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    auto same = [](const auto& x, const auto& y) {
      return x.rows() == y.rows() && x.cols() == y.cols() &&
             std::equal(x.data(), x.data() + x.size(), y.data(),
                        [](double p, double q) { return std::bit_cast<std::uint64_t>(p) ==
                                                        std::bit_cast<std::uint64_t>(q); });
    };
    return a.seed == b.seed && same(a.user_embeddings, b.user_embeddings) &&
           same(a.item_embeddings, b.item_embeddings) && same(a.item_bias, b.item_bias);
  }
};

/// Same shape as PolicyParams.
struct Gradient {
  Matrix user_embeddings;
  Matrix item_embeddings;
  Vector item_bias;

  static Gradient zeros_like(const PolicyParams& p) {
    return {Matrix::Zero(p.n_users(), p.dim()), Matrix::Zero(p.n_items(), p.dim()),
            Vector::Zero(p.n_items())};
  }

  Gradient& operator+=(const Gradient& o) {
    user_embeddings += o.user_embeddings;
    item_embeddings += o.item_embeddings;
    item_bias += o.item_bias;
    return *this;
  }

  Gradient& operator*=(double s) {
    user_embeddings *= s;
    item_embeddings *= s;
    item_bias *= s;
    return *this;
  }

  bool all_finite() const {
    return user_embeddings.allFinite() && item_embeddings.allFinite() && item_bias.allFinite();
  }

  double max_abs_diff(const Gradient& o) const {
    return std::max({(user_embeddings - o.user_embeddings).cwiseAbs().maxCoeff(),
                     (item_embeddings - o.item_embeddings).cwiseAbs().maxCoeff(),
                     (item_bias - o.item_bias).cwiseAbs().maxCoeff()});
  }

  bool is_zero() const {
    return (user_embeddings.array() == 0.0).all() && (item_embeddings.array() == 0.0).all() &&
           (item_bias.array() == 0.0).all();
  }
};

/// Immutable copy of the parameters used for sampling (the "old" policy).
class FrozenPolicy {
 public:
  explicit FrozenPolicy(PolicyParams params) : params_(std::move(params)) {}
  const PolicyParams& params() const noexcept { return params_; }

 private:
  PolicyParams params_;
};

inline FrozenPolicy snapshot(const PolicyParams& params) { return FrozenPolicy(params); }

/// L distinct items with the log-probabilities they were drawn with.
struct Slate {
  UserId user = 0;
  std::vector<ItemId> items;
  std::vector<double> logps;

  std::size_t length() const { return items.size(); }
  double total_logp() const {
    double s = 0.0;
    for (double lp : logps) s += lp;
    return s;
  }
};

inline PolicyParams init_policy(int n_users, int n_items, int d, std::uint64_t seed) {
  if (n_users < 1 || n_items < 1 || d < 1) {
    throw std::invalid_argument("init_policy: n_users, n_items and d must all be >= 1");
  }
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  PolicyParams p;
  p.seed = seed;
  p.user_embeddings.resize(n_users, d);
  p.item_embeddings.resize(n_items, d);
  for (Eigen::Index i = 0; i < p.user_embeddings.size(); ++i) p.user_embeddings.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < p.item_embeddings.size(); ++i) p.item_embeddings.data()[i] = normal(rng);
  p.item_bias = Vector::Zero(n_items);
  return p;
}

/// Popularity-biased start: item_bias[i] = log((count_i + 1) / (total + n_items)).
inline PolicyParams init_policy(int n_users, int n_items, int d, std::uint64_t seed,
                                const InteractionLog& init_log) {
  PolicyParams p = init_policy(n_users, n_items, d, seed);
  const auto counts = item_counts(init_log, n_items);
  const double denom = static_cast<double>(init_log.size()) + static_cast<double>(n_items);
  for (int i = 0; i < n_items; ++i) p.item_bias[i] = std::log((counts[static_cast<std::size_t>(i)] + 1.0) / denom);
  return p;
}

inline void check_user(const PolicyParams& params, UserId user) {
  if (user < 0 || user >= params.n_users()) {
    throw std::invalid_argument("user " + std::to_string(user) + " out of range");
  }
}

inline void check_items(const PolicyParams& params, std::span<const ItemId> items) {
  std::vector<ItemId> sorted(items.begin(), items.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (sorted[k] < 0 || sorted[k] >= params.n_items()) {
      throw std::invalid_argument("item " + std::to_string(sorted[k]) + " out of range");
    }
    if (k > 0 && sorted[k] == sorted[k - 1]) {
      throw std::invalid_argument("item " + std::to_string(sorted[k]) + " repeated in slate");
    }
  }
}

inline Vector logits(const PolicyParams& params, UserId user) {
  check_user(params, user);
  Vector z = params.item_embeddings * params.user_embeddings.row(user).transpose();
  z += params.item_bias;
  return z;
}

namespace detail {

/// exp(z - max z) over the whole catalog; masking zeroes entries afterwards.
struct ShiftedExp {
  Vector z;
  Vector e;
  double shift = 0.0;
};

inline ShiftedExp shifted_exp(const PolicyParams& params, UserId user) {
  ShiftedExp s;
  s.z = logits(params, user);
  s.shift = s.z.maxCoeff();
  s.e = (s.z.array() - s.shift).exp().matrix();
  return s;
}

inline void check_normalizer(double total) {
  if (!(total > 1e-290) || !std::isfinite(total)) {
    throw NumericError("masked softmax normalizer underflowed or is non-finite");
  }
}

}  // namespace detail

/// Masked softmax over items not in `prefix`. Entries on the prefix are exactly 0.
inline Vector next_item_distribution(const PolicyParams& params, UserId user,
                                     std::span<const ItemId> prefix, int slate_length) {
  if (slate_length < 1 || slate_length > params.n_items()) {
    throw std::invalid_argument("slate length must be in [1, n_items]");
  }
  if (static_cast<int>(prefix.size()) >= slate_length) {
    throw std::logic_error("prefix already holds a full slate");
  }
  check_items(params, prefix);
  auto s = detail::shifted_exp(params, user);
  for (ItemId i : prefix) s.e[i] = 0.0;
  const double total = s.e.sum();
  detail::check_normalizer(total);
  return s.e / total;
}

/// Autoregressive draw of `L` distinct items.
inline Slate sample_slate(const PolicyParams& params, UserId user, int L, Rng& rng) {
  if (L < 1 || L > params.n_items()) {
    throw std::invalid_argument("sample_slate: catalog of " + std::to_string(params.n_items()) +
                                " items cannot fill a slate of " + std::to_string(L));
  }
  auto s = detail::shifted_exp(params, user);
  Slate slate;
  slate.user = user;
  slate.items.reserve(static_cast<std::size_t>(L));
  slate.logps.reserve(static_cast<std::size_t>(L));
  const Eigen::Index n = s.e.size();
  for (int t = 0; t < L; ++t) {
    const double total = s.e.sum();
    detail::check_normalizer(total);
    const double target = uniform01(rng) * total;
    double acc = 0.0;
    Eigen::Index pick = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (s.e[j] <= 0.0) continue;
      pick = j;
      acc += s.e[j];
      if (acc > target) break;
    }
    slate.items.push_back(static_cast<ItemId>(pick));
    slate.logps.push_back((s.z[pick] - s.shift) - std::log(total));
    s.e[pick] = 0.0;
  }
  return slate;
}

/// Everything needed for the log-probability of one slate and its gradient.
/// Computes the logits once; per-position normalizers reuse the same
/// exponentials with the prefix masked out.
class SlateEvaluation {
 public:
  SlateEvaluation(const PolicyParams& params, UserId user, std::span<const ItemId> items)
      : user_(user), items_(items.begin(), items.end()) {
    if (items_.empty()) throw std::invalid_argument("slate must hold at least one item");
    check_items(params, items_);
    auto s = detail::shifted_exp(params, user);
    exp_ = s.e;
    normalizers_.reserve(items_.size());
    logps_.reserve(items_.size());
    for (ItemId i : items_) {
      const double total = s.e.sum();
      detail::check_normalizer(total);
      normalizers_.push_back(total);
      logps_.push_back((s.z[i] - s.shift) - std::log(total));
      s.e[i] = 0.0;
    }
  }

  const std::vector<double>& logps() const noexcept { return logps_; }

  double total() const {
    double s = 0.0;
    for (double lp : logps_) s += lp;
    return s;
  }

  /// out += d/dtheta sum_t weights[t] * log pi(items[t] | user, items[<t]).
  void accumulate_gradient(const PolicyParams& params, std::span<const double> weights,
                           Gradient& out) const {
    if (weights.size() != items_.size()) {
      throw std::invalid_argument("one weight per slate position required");
    }
    // d/dz_j = sum_t w_t (1[j == i_t] - p_t(j)), where p_t(j) = e_j / S_t on unmasked j.
    std::vector<double> running(items_.size());
    double q = 0.0;
    for (std::size_t t = 0; t < items_.size(); ++t) {
      q += weights[t] / normalizers_[t];
      running[t] = q;
    }
    Vector dz = -q * exp_;
    for (std::size_t k = 0; k < items_.size(); ++k) {
      const ItemId i = items_[k];
      dz[i] = weights[k] - exp_[i] * running[k];
    }
    const auto u = params.user_embeddings.row(user_);
    out.item_bias += dz;
    out.item_embeddings.noalias() += dz * u;
    out.user_embeddings.row(user_).noalias() += dz.transpose() * params.item_embeddings;
  }

 private:
  UserId user_;
  std::vector<ItemId> items_;
  Vector exp_;
  std::vector<double> normalizers_;
  std::vector<double> logps_;
};

struct SlateLogProb {
  double total = 0.0;
  std::vector<double> per_position;
};

inline SlateLogProb slate_log_prob(const PolicyParams& params, UserId user,
                                   std::span<const ItemId> items) {
  SlateEvaluation eval(params, user, items);
  return {eval.total(), eval.logps()};
}

/// Gradient of the summed slate log-probability (no 1/L factor).
inline Gradient log_prob_grad(const PolicyParams& params, UserId user, std::span<const ItemId> items) {
  SlateEvaluation eval(params, user, items);
  Gradient g = Gradient::zeros_like(params);
  const std::vector<double> ones(items.size(), 1.0);
  eval.accumulate_gradient(params, ones, g);
  return g;
}

}  // namespace sage
