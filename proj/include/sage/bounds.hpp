#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "sage/common.hpp"

namespace sage {

/// How the dynamic denominator is read.
///
/// `Literal` evaluates the published piecewise formulas as written:
///   positive: Phi = 1/(1+eps_boost) when r > 1+eps_boost, else 1
///   negative: Phi = max(1, (1-r)/lambda)
/// The positive form jumps from 1+eps_boost to r(1+eps_boost) at the
/// threshold, and the negative form is identically 1 for r > 0, lambda >= 1.
///
/// `TextIntent` realizes the described behaviour:
///   positive: coefficient r/Phi = min(r, 1+eps_boost)
///   negative: coefficient r/Phi = min(r, 1) * lambda
enum class BoundMode { Literal, TextIntent };

inline std::string to_string(BoundMode m) { return m == BoundMode::Literal ? "literal" : "text-intent"; }

inline BoundMode bound_mode_from_string(const std::string& s) {
  if (s == "literal") return BoundMode::Literal;
  if (s == "text-intent") return BoundMode::TextIntent;
  throw std::invalid_argument("unknown bound mode '" + s + "' (expected literal or text-intent)");
}

struct BoundConfig {
  double eps_boost = 0.3;
  double beta = 0.5;
  BoundMode pos_mode = BoundMode::TextIntent;
  BoundMode neg_mode = BoundMode::TextIntent;
  double ema_decay = 0.99;

  // eps_boost = 0 is accepted: it is the "no positive boost" ablation.
  void validate() const {
    if (!(eps_boost >= 0.0) || !std::isfinite(eps_boost)) throw std::invalid_argument("eps_boost must be >= 0");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be >= 0");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw std::invalid_argument("ema_decay must lie in (0, 1)");
  }
};

/// Exponential moving average of slate entropy. The first observation
/// initializes the average directly.
class EntropyTracker {
 public:
  explicit EntropyTracker(double ema_decay = 0.99) : decay_(ema_decay) {
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw std::invalid_argument("ema_decay must lie in (0, 1)");
  }

  bool initialized() const noexcept { return initialized_; }
  double h_bar() const noexcept { return h_bar_; }
  double decay() const noexcept { return decay_; }

  void update(double h) {
    if (!(h >= 0.0) || !std::isfinite(h)) throw std::invalid_argument("entropy must be finite and >= 0");
    if (!initialized_) {
      h_bar_ = h;
      initialized_ = true;
    } else {
      h_bar_ = decay_ * h_bar_ + (1.0 - decay_) * h;
    }
  }

 private:
  double decay_;
  double h_bar_ = 0.0;
  bool initialized_ = false;
};

inline EntropyTracker update_entropy_ema(EntropyTracker tracker, double h) {
  tracker.update(h);
  return tracker;
}

/// Entropy of the category histogram of one slate.
inline double list_entropy(std::span<const ItemId> slate_items, std::span<const int> category_of,
                           EntropyBase base = EntropyBase::Nats) {
  std::vector<std::pair<int, double>> hist;
  for (ItemId i : slate_items) {
    if (i < 0 || static_cast<std::size_t>(i) >= category_of.size()) {
      throw std::invalid_argument("item " + std::to_string(i) + " has no category label");
    }
    const int c = category_of[static_cast<std::size_t>(i)];
    auto it = std::find_if(hist.begin(), hist.end(), [c](const auto& kv) { return kv.first == c; });
    if (it == hist.end()) hist.emplace_back(c, 1.0); else it->second += 1.0;
  }
  std::vector<double> counts;
  counts.reserve(hist.size());
  for (const auto& kv : hist) counts.push_back(kv.second);
  return entropy_of_counts(counts, base);
}

/// lambda = 1 + beta * tanh(max(0, h_bar - h)); range [1, 1 + beta).
inline double lambda_regulator(double h, double h_bar, double beta) {
  if (!(h >= 0.0) || !(h_bar >= 0.0)) throw std::invalid_argument("entropies must be >= 0");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
  return 1.0 + beta * std::tanh(std::max(0.0, h_bar - h));
}

inline void check_ratio(double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("importance ratio must be finite and > 0");
}

/// Denominator for non-negative advantage.
inline double phi_positive(double r, const BoundConfig& config) {
  check_ratio(r);
  const double cap = 1.0 + config.eps_boost;
  if (r <= cap) return 1.0;
  return config.pos_mode == BoundMode::Literal ? 1.0 / cap : r / cap;
}

/// Denominator for negative advantage.
inline double phi_negative(double r, double lambda, const BoundConfig& config) {
  check_ratio(r);
  if (!(lambda >= 1.0)) throw std::invalid_argument("lambda must be >= 1");
  if (config.neg_mode == BoundMode::Literal) return std::max(1.0, (1.0 - r) / lambda);
  return std::max(1.0, r) / lambda;
}

/// lambda for a slate of entropy `h`. Before any history exists there is
/// nothing to compare against and lambda is 1.
inline double slate_lambda(double h, const EntropyTracker& tracker, const BoundConfig& config) {
  if (!tracker.initialized()) return 1.0;
  return lambda_regulator(h, tracker.h_bar(), config.beta);
}

/// r / Phi(S, A).
inline double effective_coefficient(double r, double advantage, double h, const EntropyTracker& tracker,
                                    const BoundConfig& config) {
  check_ratio(r);
  if (advantage >= 0.0) {
    const double phi = phi_positive(r, config);
    // r / (r / cap) can land one ulp off cap.
    if (config.pos_mode == BoundMode::TextIntent && phi != 1.0) return 1.0 + config.eps_boost;
    return r / phi;
  }
  const double lambda = slate_lambda(h, tracker, config);
  if (config.neg_mode == BoundMode::TextIntent) return std::min(r, 1.0) * lambda;
  return r / phi_negative(r, lambda, config);
}

/// Static symmetric bound: min(r, 1) for either advantage sign.
inline double gbpo_coefficient(double r) {
  check_ratio(r);
  return std::min(r, 1.0);
}

/// Clipped-surrogate coefficient: the clip bound when it binds for the given
/// advantage sign, r otherwise.
inline double grpo_clip_coefficient(double r, double advantage, double clip_eps) {
  check_ratio(r);
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw std::invalid_argument("clip_eps must lie in (0, 1)");
  return advantage >= 0.0 ? std::min(r, 1.0 + clip_eps) : std::max(r, 1.0 - clip_eps);
}

struct EntropyLevels {
  double h_bar = 1.5;
  double low = 0.0;   // slate entropy well below the average
  double high = 1.5;  // at or above the average
};

struct BoundaryRow {
  double r = 0.0;
  std::string variant;        // GBPO | SAGE-positive | SAGE-negative
  std::string mode;           // literal | text-intent
  std::string entropy_level;  // low | high
  double coefficient = 0.0;
};

/// Effective coefficient curves for plotting. Every (variant, mode, level)
/// combination is emitted, including ones where the mode or level is
/// immaterial, so the table is rectangular.
inline std::vector<BoundaryRow> boundary_curve(std::span<const double> r_grid, const BoundConfig& config,
                                               const EntropyLevels& levels = {}) {
  for (std::size_t k = 0; k < r_grid.size(); ++k) {
    check_ratio(r_grid[k]);
    if (k > 0 && r_grid[k] < r_grid[k - 1]) throw std::invalid_argument("r_grid must be sorted");
  }
  EntropyTracker tracker(config.ema_decay);
  tracker.update(levels.h_bar);
  std::vector<BoundaryRow> rows;
  rows.reserve(r_grid.size() * 12);
  for (BoundMode mode : {BoundMode::Literal, BoundMode::TextIntent}) {
    BoundConfig cfg = config;
    cfg.pos_mode = mode;
    cfg.neg_mode = mode;
    for (const char* level : {"low", "high"}) {
      const double h = std::string(level) == "low" ? levels.low : levels.high;
      for (double r : r_grid) {
        rows.push_back({r, "GBPO", to_string(mode), level, gbpo_coefficient(r)});
        rows.push_back({r, "SAGE-positive", to_string(mode), level, effective_coefficient(r, 1.0, h, tracker, cfg)});
        rows.push_back({r, "SAGE-negative", to_string(mode), level, effective_coefficient(r, -1.0, h, tracker, cfg)});
      }
    }
  }
  return rows;
}

inline std::vector<double> default_r_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 50; ++k) grid.push_back(static_cast<double>(k) / 20.0);
  return grid;
}

inline void write_boundary_csv(const std::vector<BoundaryRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << "r,variant,mode,entropy_level,coefficient\n";
  for (const auto& row : rows) {
    out << row.r << ',' << row.variant << ',' << row.mode << ',' << row.entropy_level << ',' << row.coefficient << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace sage
