#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sage/common.hpp"

namespace sage {

/// One user's ranked list and ground truth.
struct RankedRecommendation {
  UserId user = 0;
  std::vector<ItemId> ranked;
  std::vector<ItemId> relevant;  // any order, no duplicates required

  void validate() const {
    std::set<ItemId> seen;
    for (ItemId i : ranked) {
      if (!seen.insert(i).second) {
        throw std::invalid_argument("user " + std::to_string(user) + ": item " + std::to_string(i) +
                                    " appears twice in the ranking");
      }
    }
  }
};

namespace detail {

inline void check_k(int k) {
  if (k < 1) throw std::invalid_argument("K must be >= 1");
}

inline std::size_t hits_in_top_k(std::span<const ItemId> ranked, const std::set<ItemId>& relevant, int k) {
  std::size_t hits = 0;
  const std::size_t limit = std::min(ranked.size(), static_cast<std::size_t>(k));
  for (std::size_t r = 0; r < limit; ++r) hits += relevant.count(ranked[r]);
  return hits;
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace detail

/// |top-K ∩ relevant| / |relevant|; nullopt when nothing is relevant.
inline std::optional<double> recall_at_k(const RankedRecommendation& rec, int k) {
  detail::check_k(k);
  const std::set<ItemId> relevant(rec.relevant.begin(), rec.relevant.end());
  if (relevant.empty()) return std::nullopt;
  return static_cast<double>(detail::hits_in_top_k(rec.ranked, relevant, k)) / static_cast<double>(relevant.size());
}

/// Binary-relevance NDCG with 1/log2(rank+1) discount.
inline std::optional<double> ndcg_at_k(const RankedRecommendation& rec, int k) {
  detail::check_k(k);
  const std::set<ItemId> relevant(rec.relevant.begin(), rec.relevant.end());
  if (relevant.empty()) return std::nullopt;
  double dcg = 0.0;
  const std::size_t limit = std::min(rec.ranked.size(), static_cast<std::size_t>(k));
  for (std::size_t r = 0; r < limit; ++r) {
    if (relevant.count(rec.ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  double ideal = 0.0;
  const std::size_t ideal_hits = std::min(relevant.size(), static_cast<std::size_t>(k));
  for (std::size_t r = 0; r < ideal_hits; ++r) ideal += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / ideal;
}

/// Entropy of the sub-category histogram pooled over every user's top-K.
inline double entropy_at_k(std::span<const RankedRecommendation> recs, std::span<const int> category_of, int k,
                           EntropyBase base = EntropyBase::Nats) {
  detail::check_k(k);
  std::map<int, double> hist;
  for (const auto& rec : recs) {
    const std::size_t limit = std::min(rec.ranked.size(), static_cast<std::size_t>(k));
    for (std::size_t r = 0; r < limit; ++r) {
      const ItemId i = rec.ranked[r];
      if (i < 0 || static_cast<std::size_t>(i) >= category_of.size()) {
        throw std::invalid_argument("item " + std::to_string(i) + " has no category");
      }
      hist[category_of[static_cast<std::size_t>(i)]] += 1.0;
    }
  }
  std::vector<double> counts;
  for (const auto& [cat, n] : hist) counts.push_back(n);
  return entropy_of_counts(counts, base);
}

/// Mean pairwise (1 - cosine similarity) over unordered item pairs.
inline double ild(std::span<const ItemId> slate_items, const Matrix& item_vectors) {
  if (slate_items.size() < 2) throw std::invalid_argument("ILD needs at least two items");
  for (ItemId i : slate_items) {
    if (i < 0 || i >= item_vectors.rows()) throw std::invalid_argument("no vector for item " + std::to_string(i));
  }
  detail::CompensatedSum total;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < slate_items.size(); ++a) {
    const auto va = item_vectors.row(slate_items[a]);
    for (std::size_t b = a + 1; b < slate_items.size(); ++b) {
      const auto vb = item_vectors.row(slate_items[b]);
      const double denom = va.norm() * vb.norm();
      const double cosine = denom > 0.0 ? va.dot(vb) / denom : 0.0;
      total.add(1.0 - std::clamp(cosine, -1.0, 1.0));
      ++pairs;
    }
  }
  return std::max(0.0, total.value() / static_cast<double>(pairs));
}

/// Users whose relevant set has no cold item are excluded.
struct ColdRecallResult {
  std::optional<double> value;
  std::size_t users_counted = 0;
  std::size_t users_excluded = 0;
};

inline ColdRecallResult cold_recall(std::span<const RankedRecommendation> recs, std::span<const ItemId> cold_set,
                                    int k) {
  detail::check_k(k);
  const std::set<ItemId> cold(cold_set.begin(), cold_set.end());
  ColdRecallResult out;
  detail::CompensatedSum sum;
  for (const auto& rec : recs) {
    RankedRecommendation restricted{rec.user, rec.ranked, {}};
    for (ItemId i : rec.relevant) {
      if (cold.count(i)) restricted.relevant.push_back(i);
    }
    const auto r = recall_at_k(restricted, k);
    if (!r) {
      ++out.users_excluded;
      continue;
    }
    sum.add(*r);
    ++out.users_counted;
  }
  if (out.users_counted > 0) out.value = sum.value() / static_cast<double>(out.users_counted);
  return out;
}

/// The full suite over a test set. Absent values serialize as null.
struct MetricsSummary {
  int k = 10;
  std::size_t n_users = 0;
  std::optional<double> recall;
  std::optional<double> ndcg;
  std::optional<double> entropy;
  std::optional<double> ild;
  std::optional<double> cold_recall;
  std::size_t excluded_users = 0;       // empty relevant set
  std::size_t cold_excluded_users = 0;  // no cold relevant item
};

struct MetricsOptions {
  int k = 10;
  EntropyBase entropy_base = EntropyBase::Nats;
};

/// `category_of` and `item_vectors` may be empty, in which case Entropy@K
/// and ILD are reported absent.
inline MetricsSummary evaluate_recommendations(std::span<const RankedRecommendation> recs,
                                               std::span<const ItemId> cold_set, std::span<const int> category_of,
                                               const Matrix* item_vectors, const MetricsOptions& opts) {
  MetricsSummary s;
  s.k = opts.k;
  s.n_users = recs.size();
  detail::CompensatedSum recall_sum, ndcg_sum, ild_sum;
  std::size_t counted = 0, ild_counted = 0;
  for (const auto& rec : recs) {
    rec.validate();
    const auto r = recall_at_k(rec, opts.k);
    if (!r) {
      ++s.excluded_users;
    } else {
      recall_sum.add(*r);
      ndcg_sum.add(*ndcg_at_k(rec, opts.k));
      ++counted;
    }
    if (item_vectors != nullptr && item_vectors->rows() > 0) {
      const std::size_t limit = std::min(rec.ranked.size(), static_cast<std::size_t>(opts.k));
      if (limit >= 2) {
        ild_sum.add(ild(std::span<const ItemId>(rec.ranked.data(), limit), *item_vectors));
        ++ild_counted;
      }
    }
  }
  if (counted > 0) {
    s.recall = recall_sum.value() / static_cast<double>(counted);
    s.ndcg = ndcg_sum.value() / static_cast<double>(counted);
  }
  if (!category_of.empty() && !recs.empty()) s.entropy = entropy_at_k(recs, category_of, opts.k, opts.entropy_base);
  if (ild_counted > 0) s.ild = ild_sum.value() / static_cast<double>(ild_counted);
  if (!cold_set.empty()) {
    const auto cr = cold_recall(recs, cold_set, opts.k);
    s.cold_recall = cr.value;
    s.cold_excluded_users = cr.users_excluded;
  }
  return s;
}

inline nlohmann::json to_json(const MetricsSummary& s) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"schema_version", 1},
          {"k", s.k},
          {"n_users", s.n_users},
          {"recall", opt(s.recall)},
          {"ndcg", opt(s.ndcg)},
          {"entropy", opt(s.entropy)},
          {"ild", opt(s.ild)},
          {"cold_recall", opt(s.cold_recall)},
          {"excluded_users", s.excluded_users},
          {"cold_excluded_users", s.cold_excluded_users}};
}

inline MetricsSummary metrics_from_json(const nlohmann::json& j) {
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  MetricsSummary s;
  s.k = j.at("k").get<int>();
  s.n_users = j.at("n_users").get<std::size_t>();
  s.recall = opt("recall");
  s.ndcg = opt("ndcg");
  s.entropy = opt("entropy");
  s.ild = opt("ild");
  s.cold_recall = opt("cold_recall");
  s.excluded_users = j.at("excluded_users").get<std::size_t>();
  s.cold_excluded_users = j.at("cold_excluded_users").get<std::size_t>();
  return s;
}

}  // namespace sage
