#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sage/bounds.hpp"
#include "sage/metrics.hpp"
#include "sage/policy.hpp"
#include "sage/report.hpp"
#include "sage/signal.hpp"
#include "sage/simenv.hpp"

namespace sage {

enum class OptimizerKind { SAGE, GBPO, GRPO };
enum class AdvantageMode { Decoupled, Naive };
enum class UpdateRule { Plain, Adam };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::SAGE: return "SAGE";
    case OptimizerKind::GBPO: return "GBPO";
    case OptimizerKind::GRPO: return "GRPO";
  }
  return "?";
}

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "SAGE") return OptimizerKind::SAGE;
  if (s == "GBPO") return OptimizerKind::GBPO;
  if (s == "GRPO") return OptimizerKind::GRPO;
  throw std::invalid_argument("unknown optimizer '" + s + "' (expected SAGE, GBPO or GRPO)");
}

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::SAGE;
  int group_size = 8;
  int batch_users = 32;
  double learning_rate = 0.05;
  int total_steps = 500;
  int slate_length = 6;
  int inner_updates = 1;  // gradient steps per frozen snapshot
  int embedding_dim = 16;
  UpdateRule update_rule = UpdateRule::Plain;
  AdvantageMode advantage = AdvantageMode::Decoupled;
  std::vector<double> weights{0.5, 0.5};
  double norm_eps = kDefaultNormEps;
  double clip_eps = 0.2;  // GRPO only
  BoundConfig bounds;
  int eval_every = 0;     // 0 disables checkpoint evaluation
  MetricsOptions metrics;
  std::uint64_t seed = 0;

  void validate() const {
    if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
    if (batch_users < 1) throw std::invalid_argument("batch_users must be >= 1");
    if (group_size * batch_users < 2) throw std::invalid_argument("a batch needs at least two slates");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
    if (slate_length < 1) throw std::invalid_argument("slate_length must be >= 1");
    if (inner_updates < 1) throw std::invalid_argument("inner_updates must be >= 1");
    if (embedding_dim < 1) throw std::invalid_argument("embedding_dim must be >= 1");
    if (weights.empty()) throw std::invalid_argument("weights must be non-empty");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw std::invalid_argument("clip_eps must lie in (0, 1)");
    if (eval_every < 0) throw std::invalid_argument("eval_every must be >= 0");
    if (metrics.k < 1) throw std::invalid_argument("K must be >= 1");
    bounds.validate();
  }
};

/// G slates for one user under one frozen policy, with their feedback.
struct TrajectoryGroup {
  UserId user = 0;
  std::vector<Slate> slates;
  Matrix rewards;                // G x M
  std::vector<double> entropies; // list entropy per slate at collection time
};

inline TrajectoryGroup collect_group(const FrozenPolicy& frozen, const World& world, UserId user, int group_size,
                                     int slate_length, Rng& rng) {
  if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
  TrajectoryGroup g;
  g.user = user;
  g.slates.reserve(static_cast<std::size_t>(group_size));
  g.rewards.resize(group_size, 2);
  for (int s = 0; s < group_size; ++s) {
    Slate slate = sample_slate(frozen.params(), user, slate_length, rng);
    const auto r = feedback(world.users[static_cast<std::size_t>(user)], slate.items, world.catalog, world.feedback, rng);
    g.rewards(s, 0) = r[0];
    g.rewards(s, 1) = r[1];
    g.entropies.push_back(list_entropy(slate.items, world.catalog.category_of));
    g.slates.push_back(std::move(slate));
  }
  return g;
}

/// Per-slate advantages for a batch, flattened group-major. Decoupled:
/// group z-scores per objective, weighted sum, then batch z-score. Naive:
/// group z-score of the weighted sum, then batch z-score.
inline std::vector<double> batch_advantages(std::span<const TrajectoryGroup> batch, const TrainConfig& cfg) {
  std::vector<double> raw;
  for (const auto& g : batch) {
    if (g.rewards.cols() != static_cast<Eigen::Index>(cfg.weights.size())) {
      throw std::invalid_argument("reward width does not match the number of weights");
    }
    const auto a = cfg.advantage == AdvantageMode::Decoupled
                       ? decoupled_advantage(group_normalize(g.rewards, cfg.norm_eps), cfg.weights)
                       : naive_advantage(g.rewards, cfg.weights, cfg.norm_eps);
    raw.insert(raw.end(), a.begin(), a.end());
  }
  return batch_normalize(raw, cfg.norm_eps);
}

struct GradientStats {
  double coef_pos_sum = 0.0;
  double coef_neg_sum = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double ratio_mean = 1.0;
  double adv_mean = 0.0;
  double adv_std = 0.0;

  std::optional<double> coef_pos_mean() const {
    return n_pos ? std::optional<double>(coef_pos_sum / static_cast<double>(n_pos)) : std::nullopt;
  }
  std::optional<double> coef_neg_mean() const {
    return n_neg ? std::optional<double>(coef_neg_sum / static_cast<double>(n_neg)) : std::nullopt;
  }
};

struct GradientResult {
  Gradient gradient;
  GradientStats stats;
};

/// Batch-mean ascent direction
///   mean_S [ c(S) * A(S) * (1/L) * sum_t grad log pi(i_t | u, S_<t) ]
/// with c = r/Phi for SAGE, min(r, 1) for GBPO, and per-position clipped
/// token ratios for GRPO. Old log-probs are the ones stored at sampling.
inline GradientResult sage_gradient(std::span<const TrajectoryGroup> batch, const PolicyParams& params,
                                    const FrozenPolicy& frozen, const TrainConfig& cfg, const EntropyTracker& tracker) {
  if (batch.empty()) throw std::invalid_argument("sage_gradient: empty batch");
  const auto& old = frozen.params();
  if (old.n_items() != params.n_items() || old.n_users() != params.n_users() || old.dim() != params.dim()) {
    throw std::invalid_argument("sage_gradient: frozen policy shape differs from params");
  }
  const auto advantages = batch_advantages(batch, cfg);
  GradientResult out{Gradient::zeros_like(params), {}};
  const Moments adv_moments = population_moments(advantages);
  out.stats.adv_mean = adv_moments.mean;
  out.stats.adv_std = adv_moments.stddev;

  std::size_t idx = 0;
  double ratio_sum = 0.0;
  std::vector<double> weights;
  for (std::size_t gi = 0; gi < batch.size(); ++gi) {
    const auto& group = batch[gi];
    for (std::size_t si = 0; si < group.slates.size(); ++si, ++idx) {
      const Slate& slate = group.slates[si];
      const double a = advantages[idx];
      const SlateEvaluation eval(params, group.user, slate.items);
      const double r = sequence_ratio(eval.logps(), slate.logps);
      ratio_sum += r;
      const double inv_len = 1.0 / static_cast<double>(slate.length());
      weights.assign(slate.length(), 0.0);
      double coef = 0.0;
      if (cfg.optimizer == OptimizerKind::GRPO) {
        const auto rho = token_ratios(eval.logps(), slate.logps);
        for (std::size_t t = 0; t < rho.size(); ++t) {
          const double c = grpo_clip_coefficient(rho[t], a, cfg.clip_eps);
          coef += c * inv_len;
          weights[t] = c * a * inv_len;
        }
      } else {
        coef = cfg.optimizer == OptimizerKind::SAGE
                   ? effective_coefficient(r, a, group.entropies[si], tracker, cfg.bounds)
                   : gbpo_coefficient(r);
        std::fill(weights.begin(), weights.end(), coef * a * inv_len);
      }
      if (!std::isfinite(coef) || !std::isfinite(a)) {
        throw NumericError("non-finite coefficient or advantage at group " + std::to_string(gi) + " slate " +
                           std::to_string(si) + " (user " + std::to_string(group.user) + ")");
      }
      if (a >= 0.0) {
        out.stats.coef_pos_sum += coef;
        ++out.stats.n_pos;
      } else {
        out.stats.coef_neg_sum += coef;
        ++out.stats.n_neg;
      }
      if (a != 0.0) eval.accumulate_gradient(params, weights, out.gradient);
    }
  }
  out.gradient *= 1.0 / static_cast<double>(idx);
  out.stats.ratio_mean = ratio_sum / static_cast<double>(idx);
  if (!out.gradient.all_finite()) throw NumericError("non-finite batch gradient");
  return out;
}

/// First/second moment state for the adaptive update rule.
struct OptimizerState {
  Gradient m;
  Gradient v;
  long steps = 0;
};

inline OptimizerState make_optimizer_state(const PolicyParams& params) {
  return {Gradient::zeros_like(params), Gradient::zeros_like(params), 0};
}

/// Gradient ascent: plain `params += lr * grad`, or Adam with bias correction.
inline void apply_update(PolicyParams& params, const Gradient& grad, OptimizerState& state, double learning_rate,
                         UpdateRule rule = UpdateRule::Plain) {
  if (grad.item_bias.size() != params.item_bias.size() || grad.user_embeddings.rows() != params.user_embeddings.rows() ||
      grad.item_embeddings.cols() != params.item_embeddings.cols()) {
    throw std::invalid_argument("apply_update: gradient shape differs from params");
  }
  if (rule == UpdateRule::Plain) {
    params.user_embeddings += learning_rate * grad.user_embeddings;
    params.item_embeddings += learning_rate * grad.item_embeddings;
    params.item_bias += learning_rate * grad.item_bias;
  } else {
    constexpr double b1 = 0.9, b2 = 0.999, tiny = 1e-8;
    ++state.steps;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
    auto step = [&](auto& p, auto& m, auto& v, const auto& g) {
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
      p.array() += learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + tiny);
    };
    step(params.user_embeddings, state.m.user_embeddings, state.v.user_embeddings, grad.user_embeddings);
    step(params.item_embeddings, state.m.item_embeddings, state.v.item_embeddings, grad.item_embeddings);
    step(params.item_bias, state.m.item_bias, state.v.item_bias, grad.item_bias);
  }
  if (!params.all_finite()) throw NumericError("parameters became non-finite after update");
}

/// Mean over users of the first-position probability mass on cold items.
inline double cold_item_mass(const PolicyParams& params, const Catalog& catalog) {
  double total = 0.0;
  for (UserId u = 0; u < params.n_users(); ++u) {
    const Vector p = next_item_distribution(params, u, {}, 1);
    double cold = 0.0;
    for (ItemId i : catalog.cold_set) cold += p[i];
    total += cold;
  }
  return total / static_cast<double>(params.n_users());
}

/// Top-K by logit for every user (greedy decoding ranks the same way).
inline std::vector<RankedRecommendation> recommend_top_k(const PolicyParams& params, const World& world, int k) {
  std::vector<RankedRecommendation> recs;
  recs.reserve(static_cast<std::size_t>(params.n_users()));
  const int n = params.n_items();
  std::vector<ItemId> ids(static_cast<std::size_t>(n));
  for (UserId u = 0; u < params.n_users(); ++u) {
    const Vector z = logits(params, u);
    std::iota(ids.begin(), ids.end(), 0);
    const auto kk = static_cast<std::ptrdiff_t>(std::min(k, n));
    std::partial_sort(ids.begin(), ids.begin() + kk, ids.end(), [&](ItemId a, ItemId b) {
      return z[a] > z[b] || (z[a] == z[b] && a < b);
    });
    recs.push_back({u, std::vector<ItemId>(ids.begin(), ids.begin() + kk), world.relevant[static_cast<std::size_t>(u)]});
  }
  return recs;
}

inline MetricsSummary evaluate_policy(const PolicyParams& params, const World& world, const MetricsOptions& opts) {
  const auto recs = recommend_top_k(params, world, opts.k);
  return evaluate_recommendations(recs, world.catalog.cold_set, world.catalog.category_of, &world.item_vectors, opts);
}

struct TrainResult {
  ExperimentReport report;
  PolicyParams params;
  MetricsSummary final_metrics;
};

/// Each outer step: snapshot -> collect a group per sampled user ->
/// `inner_updates` gradient steps against the snapshot -> refresh the
/// entropy average with the batch-mean slate entropy -> log a record.
inline TrainResult train(const TrainConfig& cfg, const World& world,
                         const std::function<void(const StepRecord&)>& on_step = {}) {
  cfg.validate();
  const int n_users = static_cast<int>(world.users.size());
  if (cfg.slate_length > world.catalog.n_items()) throw std::invalid_argument("slate longer than catalog");
  TrainResult result{{}, init_policy(n_users, world.catalog.n_items(), cfg.embedding_dim, cfg.seed, world.log), {}};
  PolicyParams& params = result.params;
  OptimizerState opt = make_optimizer_state(params);
  EntropyTracker tracker(cfg.bounds.ema_decay);
  Rng rng(cfg.seed ^ 0x5a6e5a6e5a6e5a6eULL);

  std::vector<UserId> pool(static_cast<std::size_t>(n_users));
  std::iota(pool.begin(), pool.end(), 0);
  const int batch_users = std::min(cfg.batch_users, n_users);

  for (int step = 0; step < cfg.total_steps; ++step) {
    try {
      const FrozenPolicy frozen = snapshot(params);
      // Partial Fisher-Yates: distinct users per step.
      for (int k = 0; k < batch_users; ++k) {
        const auto j = k + static_cast<int>(rng() % static_cast<std::uint64_t>(n_users - k));
        std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(j)]);
      }
      std::vector<TrajectoryGroup> batch;
      batch.reserve(static_cast<std::size_t>(batch_users));
      for (int k = 0; k < batch_users; ++k) {
        batch.push_back(collect_group(frozen, world, pool[static_cast<std::size_t>(k)], cfg.group_size, cfg.slate_length, rng));
      }

      StepRecord rec;
      rec.step = step;
      GradientStats first{}, last{};
      double coef_pos = 0.0, coef_neg = 0.0;
      std::size_t n_pos = 0, n_neg = 0;
      for (int k = 0; k < cfg.inner_updates; ++k) {
        const auto g = sage_gradient(batch, params, frozen, cfg, tracker);
        if (k == 0) first = g.stats;
        last = g.stats;
        coef_pos += g.stats.coef_pos_sum;
        coef_neg += g.stats.coef_neg_sum;
        n_pos += g.stats.n_pos;
        n_neg += g.stats.n_neg;
        apply_update(params, g.gradient, opt, cfg.learning_rate, cfg.update_rule);
      }

      double entropy_sum = 0.0, clicks = 0.0, watch = 0.0;
      std::size_t n_slates = 0;
      for (const auto& g : batch) {
        for (double h : g.entropies) entropy_sum += h;
        clicks += g.rewards.col(0).sum();
        watch += g.rewards.col(1).sum();
        n_slates += g.slates.size();
      }
      const double inv = 1.0 / static_cast<double>(n_slates);
      tracker.update(entropy_sum * inv);

      rec.cold_mass = cold_item_mass(params, world.catalog);
      rec.mean_entropy = entropy_sum * inv;
      rec.adv_mean = first.adv_mean;
      rec.adv_std = first.adv_std;
      if (n_pos) rec.coef_pos_mean = coef_pos / static_cast<double>(n_pos);
      if (n_neg) rec.coef_neg_mean = coef_neg / static_cast<double>(n_neg);
      rec.ratio_mean = last.ratio_mean;
      rec.reward_clicks = clicks * inv;
      rec.reward_watch = watch * inv;
      rec.h_bar = tracker.h_bar();
      if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) rec.eval = evaluate_policy(params, world, cfg.metrics);
      if (on_step) on_step(rec);
      result.report.records.push_back(std::move(rec));
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(step) + ": " + e.what());
    }
  }
  result.final_metrics = evaluate_policy(params, world, cfg.metrics);
  return result;
}

}  // namespace sage
