#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sage/metrics.hpp"

namespace sage {

/// Training-dynamics snapshot for one outer step.
struct StepRecord {
  int step = 0;
  double cold_mass = 0.0;       // mean first-position probability on cold items
  double mean_entropy = 0.0;    // mean list entropy of the collected slates
  double adv_mean = 0.0;
  double adv_std = 0.0;
  std::optional<double> coef_pos_mean;  // absent when no slate had A >= 0
  std::optional<double> coef_neg_mean;
  double ratio_mean = 1.0;      // mean sequence ratio at the last inner update
  double reward_clicks = 0.0;   // mean raw objective values
  double reward_watch = 0.0;
  double h_bar = 0.0;           // entropy average after this step's refresh
  std::optional<MetricsSummary> eval;

  friend bool operator==(const StepRecord& a, const StepRecord& b) {
    auto same_eval = [](const std::optional<MetricsSummary>& x, const std::optional<MetricsSummary>& y) {
      if (x.has_value() != y.has_value()) return false;
      if (!x) return true;
      return x->k == y->k && x->n_users == y->n_users && x->recall == y->recall && x->ndcg == y->ndcg &&
             x->entropy == y->entropy && x->ild == y->ild && x->cold_recall == y->cold_recall &&
             x->excluded_users == y->excluded_users && x->cold_excluded_users == y->cold_excluded_users;
    };
    return a.step == b.step && a.cold_mass == b.cold_mass && a.mean_entropy == b.mean_entropy &&
           a.adv_mean == b.adv_mean && a.adv_std == b.adv_std && a.coef_pos_mean == b.coef_pos_mean &&
           a.coef_neg_mean == b.coef_neg_mean && a.ratio_mean == b.ratio_mean &&
           a.reward_clicks == b.reward_clicks && a.reward_watch == b.reward_watch && a.h_bar == b.h_bar &&
           same_eval(a.eval, b.eval);
  }
};

struct ExperimentReport {
  std::vector<StepRecord> records;
};

inline constexpr int kReportSchemaVersion = 1;

inline nlohmann::json to_json(const StepRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j = {{"schema_version", kReportSchemaVersion},
                      {"step", r.step},
                      {"cold_mass", r.cold_mass},
                      {"mean_entropy", r.mean_entropy},
                      {"adv_mean", r.adv_mean},
                      {"adv_std", r.adv_std},
                      {"coef_pos_mean", opt(r.coef_pos_mean)},
                      {"coef_neg_mean", opt(r.coef_neg_mean)},
                      {"ratio_mean", r.ratio_mean},
                      {"reward_clicks", r.reward_clicks},
                      {"reward_watch", r.reward_watch},
                      {"h_bar", r.h_bar}};
  j["eval"] = r.eval ? to_json(*r.eval) : nlohmann::json(nullptr);
  return j;
}

inline StepRecord step_record_from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<int>() != kReportSchemaVersion) throw IoError("unsupported report schema_version");
  auto opt = [&](const char* key) -> std::optional<double> {
    return j.at(key).is_null() ? std::nullopt : std::optional<double>(j.at(key).get<double>());
  };
  StepRecord r;
  r.step = j.at("step").get<int>();
  r.cold_mass = j.at("cold_mass").get<double>();
  r.mean_entropy = j.at("mean_entropy").get<double>();
  r.adv_mean = j.at("adv_mean").get<double>();
  r.adv_std = j.at("adv_std").get<double>();
  r.coef_pos_mean = opt("coef_pos_mean");
  r.coef_neg_mean = opt("coef_neg_mean");
  r.ratio_mean = j.at("ratio_mean").get<double>();
  r.reward_clicks = j.at("reward_clicks").get<double>();
  r.reward_watch = j.at("reward_watch").get<double>();
  r.h_bar = j.at("h_bar").get<double>();
  if (!j.at("eval").is_null()) r.eval = metrics_from_json(j.at("eval"));
  return r;
}

/// JSON-lines: one record per line.
inline void write_report_jsonl(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& r : report.records) out << to_json(r).dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline ExperimentReport read_report_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  ExperimentReport report;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      report.records.push_back(step_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return report;
}

/// Flat CSV of the per-step curves (eval columns empty between checkpoints).
inline void write_report_csv(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << "step,cold_mass,mean_entropy,adv_mean,adv_std,coef_pos_mean,coef_neg_mean,ratio_mean,"
         "reward_clicks,reward_watch,h_bar,recall,ndcg,entropy_at_k,ild,cold_recall\n";
  auto put = [&](const std::optional<double>& v) {
    out << ',';
    if (v) out << *v;
  };
  for (const auto& r : report.records) {
    out << r.step << ',' << r.cold_mass << ',' << r.mean_entropy << ',' << r.adv_mean << ',' << r.adv_std;
    put(r.coef_pos_mean);
    put(r.coef_neg_mean);
    out << ',' << r.ratio_mean << ',' << r.reward_clicks << ',' << r.reward_watch << ',' << r.h_bar;
    if (r.eval) {
      put(r.eval->recall);
      put(r.eval->ndcg);
      put(r.eval->entropy);
      put(r.eval->ild);
      put(r.eval->cold_recall);
    } else {
      out << ",,,,,";
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace sage
