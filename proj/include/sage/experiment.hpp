#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sage/checkpoint.hpp"
#include "sage/config.hpp"
#include "sage/interaction_log.hpp"
#include "sage/trainer.hpp"

namespace sage {

struct RunOptions {
  bool quiet = false;
  std::ostream* log = &std::cerr;
};

/// Scalar outcomes of one seed's run, keyed by metric name.
struct SeedOutcome {
  std::uint64_t seed = 0;
  std::map<std::string, std::optional<double>> values;
};

/// Window over which the tail slate entropy is averaged.
inline constexpr int kTailWindow = 100;

inline const std::vector<std::string>& summary_metric_names() {
  static const std::vector<std::string> names{"recall",         "ndcg",      "entropy_at_k", "ild",
                                              "cold_recall",    "cold_mass", "tail_entropy"};
  return names;
}

inline SeedOutcome summarize_run(std::uint64_t seed, const TrainResult& res) {
  SeedOutcome o;
  o.seed = seed;
  const auto& m = res.final_metrics;
  o.values["recall"] = m.recall;
  o.values["ndcg"] = m.ndcg;
  o.values["entropy_at_k"] = m.entropy;
  o.values["ild"] = m.ild;
  o.values["cold_recall"] = m.cold_recall;
  const auto& recs = res.report.records;
  o.values["cold_mass"] = std::nullopt;
  o.values["tail_entropy"] = std::nullopt;
  if (!recs.empty()) {
    o.values["cold_mass"] = recs.back().cold_mass;
    const std::size_t from = recs.size() > kTailWindow ? recs.size() - kTailWindow : 0;
    double h = 0.0;
    for (std::size_t k = from; k < recs.size(); ++k) h += recs[k].mean_entropy;
    o.values["tail_entropy"] = h / static_cast<double>(recs.size() - from);
  }
  return o;
}

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace detail

/// Mean and population std of the present values; nullopt when none are.
inline std::pair<std::optional<double>, std::optional<double>> mean_std(const std::vector<SeedOutcome>& runs,
                                                                       const std::string& metric) {
  std::vector<double> xs;
  for (const auto& r : runs) {
    const auto it = r.values.find(metric);
    if (it != r.values.end() && it->second) xs.push_back(*it->second);
  }
  if (xs.empty()) return {std::nullopt, std::nullopt};
  const Moments m = population_moments(xs);
  return {m.mean, m.stddev};
}

/// summary.csv: one row per (metric, seed) plus a `mean` row carrying the
/// cross-seed std. Absent values are empty cells.
inline void write_summary_csv(const std::vector<SeedOutcome>& runs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "metric,seed,value,std\n";
  for (const auto& name : summary_metric_names()) {
    for (const auto& r : runs) {
      const auto& v = r.values.at(name);
      out << name << ',' << r.seed << ',' << (v ? detail::fmt(*v) : "") << ",\n";
    }
    const auto [mean, sd] = mean_std(runs, name);
    out << name << ",mean," << (mean ? detail::fmt(*mean) : "") << ',' << (sd ? detail::fmt(*sd) : "") << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

/// Thrown after the partial artifacts of an aborted seed have been written.
class RunAborted : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Trains one seed and writes its artifact directory:
///   report.jsonl, report.csv, metrics.json, checkpoint.json, catalog.json,
///   interactions.csv
/// On a numeric abort the records so far, the catalog/log and error.json are
/// written before RunAborted propagates.
inline SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir,
                            const RunOptions& opts = {}) {
  detail::ensure_dir(dir);
  const World world = build_world(cfg.world, seed);
  save_catalog(world.catalog, (dir / "catalog.json").string());
  write_interaction_csv(world.log, (dir / "interactions.csv").string());
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  ExperimentReport partial;
  TrainResult res;
  try {
    res = train(tc, world, [&](const StepRecord& r) {
      partial.records.push_back(r);
      if (!opts.quiet && opts.log && (r.step + 1) % 100 == 0) {
        *opts.log << "[seed " << seed << "] step " << r.step + 1 << "/" << tc.total_steps << " cold_mass "
                  << r.cold_mass << " entropy " << r.mean_entropy << '\n';
      }
    });
  } catch (const NumericError& e) {
    write_report_jsonl(partial, (dir / "report.jsonl").string());
    write_report_csv(partial, (dir / "report.csv").string());
    detail::write_json_file(dir / "error.json", {{"schema_version", 1},
                                                 {"kind", "sage.error"},
                                                 {"seed", seed},
                                                 {"completed_steps", partial.records.size()},
                                                 {"message", e.what()}});
    throw RunAborted("seed " + std::to_string(seed) + ": " + e.what());
  }
  write_report_jsonl(res.report, (dir / "report.jsonl").string());
  write_report_csv(res.report, (dir / "report.csv").string());
  detail::write_json_file(dir / "metrics.json", to_json(res.final_metrics));
  save_checkpoint(res.params, (dir / "checkpoint.json").string());
  return summarize_run(seed, res);
}

inline std::filesystem::path seed_dir(const std::filesystem::path& root, std::uint64_t seed) {
  return root / ("seed_" + std::to_string(seed));
}

/// Runs every seed, then writes summary.csv under the output directory.
inline std::vector<SeedOutcome> run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  const std::filesystem::path root(cfg.output_dir);
  detail::ensure_dir(root);
  std::vector<SeedOutcome> runs;
  for (std::uint64_t seed : cfg.seeds) {
    try {
      runs.push_back(run_seed(cfg, seed, seed_dir(root, seed), opts));
    } catch (const RunAborted& e) {
      detail::write_json_file(root / "error.json", {{"schema_version", 1},
                                                    {"kind", "sage.error"},
                                                    {"seed", seed},
                                                    {"message", e.what()}});
      throw;
    }
  }
  write_summary_csv(runs, root / "summary.csv");
  return runs;
}

struct AblationVariant {
  std::string name;
  ExperimentConfig config;
};

/// Full SAGE and the three single-mechanism removals, on the same seeds.
inline std::vector<AblationVariant> ablation_variants(const ExperimentConfig& base) {
  ExperimentConfig full = base;
  full.train.optimizer = OptimizerKind::SAGE;
  full.train.advantage = AdvantageMode::Decoupled;
  std::vector<AblationVariant> out;
  out.push_back({"full", full});
  out.push_back({"no_boost", full});
  out.back().config.train.bounds.eps_boost = 0.0;
  out.push_back({"no_entropy_penalty", full});
  out.back().config.train.bounds.beta = 0.0;
  out.push_back({"no_decoupling", full});
  out.back().config.train.advantage = AdvantageMode::Naive;
  for (auto& v : out) v.config.output_dir = (std::filesystem::path(base.output_dir) / v.name).string();
  return out;
}

struct AblationRow {
  std::string variant;
  std::string metric;
  std::optional<double> mean;
  std::optional<double> normalized;  // mean / full-model mean
};

/// Runs every variant through run_experiment and writes ablation.csv with
/// per-metric means normalized to the full model.
inline std::vector<AblationRow> run_ablation(const ExperimentConfig& base, const RunOptions& opts = {}) {
  base.validate();
  const auto variants = ablation_variants(base);
  std::map<std::string, std::vector<SeedOutcome>> results;
  for (const auto& v : variants) {
    if (!opts.quiet && opts.log) *opts.log << "[ablation] variant " << v.name << '\n';
    results[v.name] = run_experiment(v.config, opts);
  }
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    for (const auto& metric : summary_metric_names()) {
      AblationRow row{v.name, metric, mean_std(results[v.name], metric).first, std::nullopt};
      const auto full = mean_std(results["full"], metric).first;
      if (row.mean && full && *full != 0.0) row.normalized = *row.mean / *full;
      rows.push_back(row);
    }
  }
  const auto path = std::filesystem::path(base.output_dir) / "ablation.csv";
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "variant,metric,value,normalized\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.metric << ',' << (r.mean ? detail::fmt(*r.mean) : "") << ','
        << (r.normalized ? detail::fmt(*r.normalized) : "") << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
  return rows;
}

/// Writes the coefficient table over r = 0.05, 0.10, ..., 2.50.
inline std::vector<BoundaryRow> emit_boundary_curve(const BoundConfig& bounds, const std::string& out_path) {
  bounds.validate();
  const auto grid = default_r_grid();
  auto rows = boundary_curve(grid, bounds);
  write_boundary_csv(rows, out_path);
  return rows;
}

// ---------------------------------------------------------------------------
// Offline evaluation of recommendation files.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& s, const std::string& where) {
  std::istringstream ss(s);
  T v{};
  if (!(ss >> v) || !(ss >> std::ws).eof()) throw IoError(where + ": cannot parse '" + s + "'");
  return v;
}

/// Calls `row(cells, where)` for each data line; `where` is "path:line".
template <typename F>
void for_each_csv_row(const std::string& path, const std::string& header_prefix, std::size_t n_cols, F row) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && !header_prefix.empty() && line.rfind(header_prefix, 0) == 0) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    auto cells = split_csv_line(line);
    if (n_cols > 0 && cells.size() != n_cols) {
      throw IoError(where + ": expected " + std::to_string(n_cols) + " fields, got " + std::to_string(cells.size()));
    }
    row(cells, where);
  }
}

}  // namespace detail

struct EvalInputs {
  std::string recommendations;  // user_id,rank,item_id
  std::string truth;            // user_id,item_id
  std::string cold;             // one item id per line; may be empty
  std::string categories;       // optional: item_id,category
  std::string vectors;          // optional: item_id,v0,v1,...
  MetricsOptions metrics;
};

inline std::vector<RankedRecommendation> read_recommendations(const std::string& rec_path,
                                                              const std::string& truth_path) {
  struct Entry {
    int rank;
    ItemId item;
  };
  std::map<UserId, std::vector<Entry>> ranked;
  std::map<UserId, std::map<ItemId, std::string>> seen;  // item -> where first seen
  std::map<UserId, std::map<int, std::string>> ranks;
  detail::for_each_csv_row(rec_path, "user_id", 3, [&](const auto& c, const std::string& where) {
    const auto u = detail::parse_number<UserId>(c[0], where);
    const auto rank = detail::parse_number<int>(c[1], where);
    const auto item = detail::parse_number<ItemId>(c[2], where);
    if (rank < 1) throw IoError(where + ": rank must be >= 1");
    if (item < 0) throw IoError(where + ": item id must be >= 0");
    if (auto [it, fresh] = seen[u].emplace(item, where); !fresh) {
      throw IoError(where + ": duplicate item " + std::to_string(item) + " for user " + std::to_string(u) +
                    " (first at " + it->second + ")");
    }
    if (auto [it, fresh] = ranks[u].emplace(rank, where); !fresh) {
      throw IoError(where + ": duplicate rank " + std::to_string(rank) + " for user " + std::to_string(u) +
                    " (first at " + it->second + ")");
    }
    ranked[u].push_back({rank, item});
  });
  std::map<UserId, std::vector<ItemId>> truth;
  detail::for_each_csv_row(truth_path, "user_id", 2, [&](const auto& c, const std::string& where) {
    const auto u = detail::parse_number<UserId>(c[0], where);
    const auto item = detail::parse_number<ItemId>(c[1], where);
    auto& v = truth[u];
    if (std::find(v.begin(), v.end(), item) == v.end()) v.push_back(item);
  });
  std::set<UserId> users;
  for (const auto& kv : ranked) users.insert(kv.first);
  for (const auto& kv : truth) users.insert(kv.first);
  std::vector<RankedRecommendation> recs;
  for (UserId u : users) {
    RankedRecommendation r;
    r.user = u;
    auto entries = ranked[u];
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.rank < b.rank; });
    for (const auto& e : entries) r.ranked.push_back(e.item);
    r.relevant = truth[u];
    recs.push_back(std::move(r));
  }
  return recs;
}

inline std::vector<ItemId> read_cold_items(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<ItemId> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(detail::parse_number<ItemId>(line, path + ":" + std::to_string(line_no)));
  }
  return out;
}

inline std::vector<int> read_categories(const std::string& path) {
  std::map<ItemId, int> cats;
  detail::for_each_csv_row(path, "item_id", 2, [&](const auto& c, const std::string& where) {
    const auto item = detail::parse_number<ItemId>(c[0], where);
    if (item < 0) throw IoError(where + ": item id must be >= 0");
    if (!cats.emplace(item, detail::parse_number<int>(c[1], where)).second) {
      throw IoError(where + ": duplicate item " + std::to_string(item));
    }
  });
  std::vector<int> out(cats.empty() ? 0 : static_cast<std::size_t>(cats.rbegin()->first) + 1, -1);
  for (const auto& [item, cat] : cats) out[static_cast<std::size_t>(item)] = cat;
  return out;
}

inline Matrix read_item_vectors(const std::string& path) {
  std::map<ItemId, std::vector<double>> rows;
  std::size_t dim = 0;
  detail::for_each_csv_row(path, "item_id", 0, [&](const auto& c, const std::string& where) {
    if (c.size() < 2) throw IoError(where + ": expected item_id followed by vector components");
    if (dim == 0) dim = c.size() - 1;
    if (c.size() - 1 != dim) throw IoError(where + ": vector width differs from earlier rows");
    const auto item = detail::parse_number<ItemId>(c[0], where);
    if (item < 0) throw IoError(where + ": item id must be >= 0");
    std::vector<double> v;
    for (std::size_t k = 1; k < c.size(); ++k) v.push_back(detail::parse_number<double>(c[k], where));
    if (!rows.emplace(item, std::move(v)).second) throw IoError(where + ": duplicate item " + std::to_string(item));
  });
  Matrix m = Matrix::Zero(rows.empty() ? 0 : rows.rbegin()->first + 1, static_cast<Eigen::Index>(dim));
  for (const auto& [item, v] : rows) {
    for (std::size_t k = 0; k < v.size(); ++k) m(item, static_cast<Eigen::Index>(k)) = v[k];
  }
  return m;
}

inline MetricsSummary evaluate_logs(const EvalInputs& in) {
  detail::check_k(in.metrics.k);
  const auto recs = read_recommendations(in.recommendations, in.truth);
  const auto cold = in.cold.empty() ? std::vector<ItemId>{} : read_cold_items(in.cold);
  const auto cats = in.categories.empty() ? std::vector<int>{} : read_categories(in.categories);
  if (!cats.empty()) {
    for (const auto& r : recs) {
      for (ItemId i : r.ranked) {
        if (static_cast<std::size_t>(i) >= cats.size() || cats[static_cast<std::size_t>(i)] < 0) {
          throw IoError(in.categories + ": no category for item " + std::to_string(i));
        }
      }
    }
  }
  const Matrix vectors = in.vectors.empty() ? Matrix() : read_item_vectors(in.vectors);
  try {
    return evaluate_recommendations(recs, cold, cats, in.vectors.empty() ? nullptr : &vectors, in.metrics);
  } catch (const std::invalid_argument& e) {
    throw IoError(e.what());
  }
}

}  // namespace sage
