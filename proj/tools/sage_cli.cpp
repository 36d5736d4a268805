// sage: run, ablate, boundary and eval subcommands.
//
// Exit codes: 0 success, 1 config error, 2 numeric abort, 3 I/O error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sage/sage.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kNumeric = 2, kIo = 3 };

struct Globals {
  std::optional<std::uint64_t> seed_override;
  std::string out;
  bool quiet = false;
};

sage::ExperimentConfig load_with_overrides(const std::string& path, const Globals& g) {
  auto cfg = sage::load_experiment_config(path);
  if (g.seed_override) cfg.seeds = {*g.seed_override};
  if (!g.out.empty()) cfg.output_dir = g.out;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw sage::ConfigError(e.what());
  }
  return cfg;
}

void print_summary(const std::vector<sage::SeedOutcome>& runs, std::ostream& os) {
  for (const auto& name : sage::summary_metric_names()) {
    const auto [mean, sd] = sage::mean_std(runs, name);
    os << name << ": ";
    if (mean) os << *mean << " (std " << *sd << ")\n"; else os << "absent\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Slate policy optimization experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed-override", seed_value, "Run only this seed");
  app.add_option("--out", g.out, "Output directory (run/ablate) or file (boundary/eval)");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  std::string config_path;
  auto* run = app.add_subcommand("run", "Train every configured seed and write reports");
  run->add_option("config", config_path, "YAML or JSON experiment config")->required();

  auto* ablate = app.add_subcommand("ablate", "Run the four-variant ablation sweep");
  ablate->add_option("config", config_path, "YAML or JSON experiment config")->required();

  auto* boundary = app.add_subcommand("boundary", "Export effective-coefficient curves as CSV");
  boundary->add_option("config", config_path, "Config whose bounds section is used (defaults otherwise)");

  sage::EvalInputs eval_in;
  auto* eval = app.add_subcommand("eval", "Score recommendation files offline");
  eval->add_option("--recs", eval_in.recommendations, "CSV user_id,rank,item_id")->required();
  eval->add_option("--truth", eval_in.truth, "CSV user_id,item_id")->required();
  eval->add_option("--cold", eval_in.cold, "Cold item ids, one per line");
  eval->add_option("--categories", eval_in.categories, "CSV item_id,category");
  eval->add_option("--vectors", eval_in.vectors, "CSV item_id,v0,v1,...");
  eval->add_option("-k,--k", eval_in.metrics.k, "Cutoff K")->capture_default_str();
  std::string base = "nats";
  eval->add_option("--entropy-base", base, "nats or bits")->check(CLI::IsMember({"nats", "bits"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  if (*seed_opt) g.seed_override = seed_value;
  sage::RunOptions opts;
  opts.quiet = g.quiet;

  try {
    if (*run) {
      const auto cfg = load_with_overrides(config_path, g);
      const auto runs = sage::run_experiment(cfg, opts);
      if (!g.quiet) print_summary(runs, std::cout);
    } else if (*ablate) {
      const auto cfg = load_with_overrides(config_path, g);
      const auto rows = sage::run_ablation(cfg, opts);
      if (!g.quiet) {
        for (const auto& r : rows) {
          if (r.metric != "cold_recall" && r.metric != "entropy_at_k" && r.metric != "ndcg") continue;
          std::cout << r.variant << ' ' << r.metric << ' ';
          if (r.normalized) std::cout << *r.normalized << '\n'; else std::cout << "absent\n";
        }
      }
    } else if (*boundary) {
      const auto cfg = config_path.empty() ? sage::ExperimentConfig{} : load_with_overrides(config_path, g);
      const std::string out = g.out.empty() ? "boundary.csv" : g.out;
      const auto rows = sage::emit_boundary_curve(cfg.train.bounds, out);
      if (!g.quiet) std::cout << "wrote " << rows.size() << " rows to " << out << '\n';
    } else if (*eval) {
      eval_in.metrics.entropy_base = base == "bits" ? sage::EntropyBase::Bits : sage::EntropyBase::Nats;
      const auto summary = sage::evaluate_logs(eval_in);
      const std::string text = sage::to_json(summary).dump(2);
      if (g.out.empty()) {
        std::cout << text << '\n';
      } else {
        std::ofstream f(g.out);
        if (!f || !(f << text << '\n')) throw sage::IoError("cannot write " + g.out);
      }
    }
  } catch (const sage::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const sage::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kNumeric;
  } catch (const sage::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  }
  return kOk;
}
