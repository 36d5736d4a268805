#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sage/common.hpp"
#include "sage/interaction_log.hpp"

namespace sage {

/// Items under one root category, each with exactly one sub-category.
struct Catalog {
  int n_subcats = 0;
  int root_category = 0;
  std::vector<int> category_of;     // sub-category per item
  std::vector<double> quality;      // [0, 1]
  std::vector<double> popularity;   // power-law weight, max 1
  std::vector<ItemId> cold_set;     // sorted ascending
  std::vector<char> cold_flag;      // cold_flag[i] != 0 iff i in cold_set

  int n_items() const { return static_cast<int>(category_of.size()); }
  bool is_cold(ItemId i) const { return cold_flag[static_cast<std::size_t>(i)] != 0; }

  void set_cold_set(std::vector<ItemId> cold) {
    std::sort(cold.begin(), cold.end());
    cold_set = std::move(cold);
    cold_flag.assign(category_of.size(), 0);
    for (ItemId i : cold_set) cold_flag[static_cast<std::size_t>(i)] = 1;
  }
};

struct UserModel {
  std::vector<double> preference;  // simplex over sub-categories
  double engagement_scale = 60.0;  // seconds of watch time at quality 1
};

/// Per-item click model: click ~ Bernoulli(sigmoid(a*affinity + b*quality + c0)),
/// watch = click * engagement * quality * noise with E[noise] = 1.
struct FeedbackModel {
  double affinity_weight = 8.0;
  double quality_weight = 3.0;
  double click_bias = -4.0;
  double watch_noise_sigma = 1.0;  // log-normal spread
  bool stochastic = true;          // false: click iff p >= 1/2, noise = 1
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

inline std::size_t cold_count(double fraction, int n) {
  // Guard against 0.2 * 100 = 20.000000000000004 style rounding.
  return static_cast<std::size_t>(std::ceil(fraction * n - 1e-9));
}

/// Item ids sorted ascending by key, ties by id.
inline std::vector<ItemId> ids_by_ascending(std::span<const double> key) {
  std::vector<ItemId> ids(key.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](ItemId a, ItemId b) {
    return key[static_cast<std::size_t>(a)] < key[static_cast<std::size_t>(b)];
  });
  return ids;
}

}  // namespace detail

/// Lowest ceil(fraction * n_items) items by interaction count; ties by id.
inline std::vector<ItemId> identify_cold_items(const InteractionLog& log, int n_items, double fraction) {
  if (log.empty()) throw std::invalid_argument("identify_cold_items: empty interaction log");
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("fraction must lie in (0, 1)");
  const auto counts = item_counts(log, n_items);
  auto ids = detail::ids_by_ascending(counts);
  ids.resize(std::min(ids.size(), detail::cold_count(fraction, n_items)));
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Sub-categories are assigned round-robin with 20% random reassignment
/// (the first n_subcats items stay fixed so none is empty). Popularity is
/// (rank+1)^-zipf over a random ranking; quality is uniform and independent.
/// The provisional cold set is the bottom fraction by popularity, which is
/// the expected interaction frequency.
inline Catalog generate_catalog(int n_items, int n_subcats, double zipf_exponent, double cold_fraction,
                                std::uint64_t seed) {
  if (n_subcats < 2 || n_items < n_subcats) throw std::invalid_argument("need n_items >= n_subcats >= 2");
  if (!(zipf_exponent > 0.0)) throw std::invalid_argument("zipf_exponent must be > 0");
  if (!(cold_fraction > 0.0 && cold_fraction < 1.0)) throw std::invalid_argument("cold_fraction must lie in (0, 1)");
  Rng rng(seed);
  Catalog c;
  c.n_subcats = n_subcats;
  c.category_of.resize(static_cast<std::size_t>(n_items));
  for (int i = 0; i < n_items; ++i) {
    int sub = i % n_subcats;
    if (i >= n_subcats && uniform01(rng) < 0.2) sub = static_cast<int>(rng() % static_cast<std::uint64_t>(n_subcats));
    c.category_of[static_cast<std::size_t>(i)] = sub;
  }
  std::vector<int> rank(static_cast<std::size_t>(n_items));
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);
  c.popularity.resize(rank.size());
  c.quality.resize(rank.size());
  for (std::size_t i = 0; i < rank.size(); ++i) {
    c.popularity[i] = std::pow(static_cast<double>(rank[i] + 1), -zipf_exponent);
    c.quality[i] = uniform01(rng);
  }
  auto ids = detail::ids_by_ascending(c.popularity);
  ids.resize(detail::cold_count(cold_fraction, n_items));
  c.set_cold_set(std::move(ids));
  return c;
}

/// Preferences are Dirichlet(concentration * base) where base decays over
/// sub-categories, so users share a mild global taste skew.
inline std::vector<UserModel> generate_users(int n_users, int n_subcats, double concentration, std::uint64_t seed) {
  if (n_users < 1 || n_subcats < 1) throw std::invalid_argument("need n_users, n_subcats >= 1");
  if (!(concentration > 0.0)) throw std::invalid_argument("preference concentration must be > 0");
  Rng rng(seed);
  std::vector<double> base(static_cast<std::size_t>(n_subcats));
  double base_sum = 0.0;
  for (int s = 0; s < n_subcats; ++s) base_sum += (base[static_cast<std::size_t>(s)] = 1.0 / std::sqrt(s + 1.0));
  std::lognormal_distribution<double> engagement(std::log(60.0), 0.3);
  std::vector<UserModel> users(static_cast<std::size_t>(n_users));
  for (auto& u : users) {
    u.preference.resize(base.size());
    double sum = 0.0;
    for (std::size_t s = 0; s < base.size(); ++s) {
      std::gamma_distribution<double> gamma(concentration * n_subcats * base[s] / base_sum, 1.0);
      u.preference[s] = gamma(rng);
      sum += u.preference[s];
    }
    if (!(sum > 0.0)) {
      std::fill(u.preference.begin(), u.preference.end(), 1.0 / static_cast<double>(base.size()));
    } else {
      for (double& p : u.preference) p /= sum;
    }
    u.engagement_scale = engagement(rng);
  }
  return users;
}

/// Historical log: user uniform, item proportional to popularity x preference.
inline InteractionLog logged_pretraining(const Catalog& catalog, std::span<const UserModel> users,
                                         int n_interactions, std::uint64_t seed) {
  if (n_interactions < 1 || users.empty()) throw std::invalid_argument("need positive interaction and user counts");
  Rng rng(seed);
  std::vector<std::discrete_distribution<int>> per_user;
  per_user.reserve(users.size());
  std::vector<double> w(static_cast<std::size_t>(catalog.n_items()));
  for (const auto& u : users) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = catalog.popularity[i] * u.preference[static_cast<std::size_t>(catalog.category_of[i])];
    }
    per_user.emplace_back(w.begin(), w.end());
  }
  InteractionLog log;
  log.reserve(static_cast<std::size_t>(n_interactions));
  for (int k = 0; k < n_interactions; ++k) {
    const auto user = static_cast<UserId>(rng() % users.size());
    const ItemId item = per_user[static_cast<std::size_t>(user)](rng);
    log.push_back({user, item, k});
  }
  return log;
}

inline double click_probability(const UserModel& user, ItemId item, const Catalog& catalog,
                                const FeedbackModel& model) {
  const auto i = static_cast<std::size_t>(item);
  const double affinity = user.preference[static_cast<std::size_t>(catalog.category_of[i])];
  return sigmoid(model.affinity_weight * affinity + model.quality_weight * catalog.quality[i] + model.click_bias);
}

/// Slate-level (clicks, watch seconds).
inline std::vector<double> feedback(const UserModel& user, std::span<const ItemId> slate_items,
                                    const Catalog& catalog, const FeedbackModel& model, Rng& rng) {
  const double sigma = model.watch_noise_sigma;
  std::lognormal_distribution<double> noise(-0.5 * sigma * sigma, sigma);
  double clicks = 0.0;
  double watch = 0.0;
  for (ItemId item : slate_items) {
    if (item < 0 || item >= catalog.n_items()) throw std::invalid_argument("slate item outside catalog");
    const double p = click_probability(user, item, catalog, model);
    const bool click = model.stochastic ? uniform01(rng) < p : p >= 0.5;
    if (!click) continue;
    clicks += 1.0;
    const double eta = model.stochastic && sigma > 0.0 ? noise(rng) : 1.0;
    watch += user.engagement_scale * catalog.quality[static_cast<std::size_t>(item)] * eta;
  }
  return {clicks, watch};
}

struct WorldConfig {
  int n_items = 1000;
  int n_subcats = 24;
  int n_users = 200;
  double zipf_exponent = 1.1;
  double cold_fraction = 0.2;
  int n_interactions = 20000;
  double preference_concentration = 0.3;
  int relevant_per_user = 10;
  double cold_quality_quantile = 0.5;  // every cold item at or above this quality quantile
  FeedbackModel feedback;

  void validate() const {
    if (n_subcats < 2 || n_items < n_subcats) throw std::invalid_argument("need n_items >= n_subcats >= 2");
    if (n_users < 1) throw std::invalid_argument("n_users must be >= 1");
    if (!(zipf_exponent > 0.0)) throw std::invalid_argument("zipf_exponent must be > 0");
    if (!(cold_fraction > 0.0 && cold_fraction < 1.0)) throw std::invalid_argument("cold_fraction must lie in (0, 1)");
    if (n_interactions < 1) throw std::invalid_argument("n_interactions must be >= 1");
    if (!(preference_concentration > 0.0)) throw std::invalid_argument("preference_concentration must be > 0");
    if (relevant_per_user < 1) throw std::invalid_argument("relevant_per_user must be >= 1");
    if (!(cold_quality_quantile >= 0.0 && cold_quality_quantile < 1.0)) {
      throw std::invalid_argument("cold_quality_quantile must lie in [0, 1)");
    }
    if (!(feedback.watch_noise_sigma >= 0.0)) throw std::invalid_argument("watch_noise_sigma must be >= 0");
  }
};

/// Everything derived from (WorldConfig, seed). Immutable once built.
struct World {
  Catalog catalog;
  std::vector<UserModel> users;
  InteractionLog log;
  FeedbackModel feedback;
  std::vector<std::vector<ItemId>> relevant;  // per user, by expected click rate
  Matrix item_vectors;                        // sub-category one-hot | quality
};

namespace detail {

/// Swap qualities with warm items so that every cold item sits at or above
/// the given catalog quality quantile.
inline void ensure_cold_quality(Catalog& c, double quantile) {
  std::vector<double> sorted = c.quality;
  std::sort(sorted.begin(), sorted.end());
  const auto at = std::min(sorted.size() - 1, static_cast<std::size_t>(quantile * static_cast<double>(sorted.size())));
  const double floor = sorted[at];
  std::vector<ItemId> cold_low;
  for (ItemId i : c.cold_set) {
    if (c.quality[static_cast<std::size_t>(i)] < floor) cold_low.push_back(i);
  }
  std::vector<ItemId> warm_high;
  for (int i = 0; i < c.n_items(); ++i) {
    if (!c.is_cold(i) && c.quality[static_cast<std::size_t>(i)] >= floor) warm_high.push_back(i);
  }
  for (std::size_t k = 0; k < cold_low.size() && k < warm_high.size(); ++k) {
    std::swap(c.quality[static_cast<std::size_t>(cold_low[k])], c.quality[static_cast<std::size_t>(warm_high[k])]);
  }
}

}  // namespace detail

inline std::vector<ItemId> top_items_by_click_rate(const UserModel& user, const Catalog& catalog,
                                                   const FeedbackModel& model, int count) {
  std::vector<double> neg(static_cast<std::size_t>(catalog.n_items()));
  for (int i = 0; i < catalog.n_items(); ++i) neg[static_cast<std::size_t>(i)] = -click_probability(user, i, catalog, model);
  auto ids = detail::ids_by_ascending(neg);
  ids.resize(std::min<std::size_t>(ids.size(), static_cast<std::size_t>(count)));
  return ids;
}

inline World build_world(const WorldConfig& cfg, std::uint64_t seed) {
  World w;
  w.catalog = generate_catalog(cfg.n_items, cfg.n_subcats, cfg.zipf_exponent, cfg.cold_fraction, seed);
  w.users = generate_users(cfg.n_users, cfg.n_subcats, cfg.preference_concentration, seed ^ 0x9e3779b97f4a7c15ULL);
  w.log = logged_pretraining(w.catalog, w.users, cfg.n_interactions, seed ^ 0xc2b2ae3d27d4eb4fULL);
  w.catalog.set_cold_set(identify_cold_items(w.log, cfg.n_items, cfg.cold_fraction));
  detail::ensure_cold_quality(w.catalog, cfg.cold_quality_quantile);
  w.feedback = cfg.feedback;
  w.relevant.reserve(w.users.size());
  for (const auto& u : w.users) w.relevant.push_back(top_items_by_click_rate(u, w.catalog, w.feedback, cfg.relevant_per_user));
  w.item_vectors = Matrix::Zero(cfg.n_items, cfg.n_subcats + 1);
  for (int i = 0; i < cfg.n_items; ++i) {
    w.item_vectors(i, w.catalog.category_of[static_cast<std::size_t>(i)]) = 1.0;
    w.item_vectors(i, cfg.n_subcats) = w.catalog.quality[static_cast<std::size_t>(i)];
  }
  return w;
}

// Catalog JSON (schema_version 1):
//   { "schema_version": 1, "kind": "sage.catalog", "n_items", "n_subcats",
//     "root_category", "category_of": [...], "quality": [...],
//     "popularity": [...], "cold_set": [...] }

inline nlohmann::json catalog_to_json(const Catalog& c) {
  return {{"schema_version", 1},      {"kind", "sage.catalog"},   {"n_items", c.n_items()},
          {"n_subcats", c.n_subcats}, {"root_category", c.root_category}, {"category_of", c.category_of},
          {"quality", c.quality},     {"popularity", c.popularity}, {"cold_set", c.cold_set}};
}

inline Catalog catalog_from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "sage.catalog" || j.value("schema_version", 0) != 1) {
    throw IoError("not a sage.catalog document (schema_version 1)");
  }
  Catalog c;
  c.n_subcats = j.at("n_subcats").get<int>();
  c.root_category = j.at("root_category").get<int>();
  c.category_of = j.at("category_of").get<std::vector<int>>();
  c.quality = j.at("quality").get<std::vector<double>>();
  c.popularity = j.at("popularity").get<std::vector<double>>();
  if (c.quality.size() != c.category_of.size() || c.popularity.size() != c.category_of.size()) {
    throw IoError("catalog arrays differ in length");
  }
  c.set_cold_set(j.at("cold_set").get<std::vector<ItemId>>());
  return c;
}

inline void save_catalog(const Catalog& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << catalog_to_json(c).dump() << '\n';
}

}  // namespace sage
