// Command-line front end for the change-detection experiment harness.
//
//   qcd run    --config cfg.json --out dir    grid experiment, all detectors
//   qcd sweep  --config cfg.json --out dir    same, threshold grid from flags
//   qcd ablate --config cfg.json --out dir    twr variants vs oracle
//   qcd multi  --config cfg.json --out dir    piecewise-stationary protocol
//   qcd trace  --config cfg.json --out dir    mean per-step LLR curves
//
// Exit codes: 0 success, 1 runtime failure, 2 bad configuration, 3 i/o error.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "qcd/csv.hpp"
#include "qcd/experiment.hpp"

namespace {

qcd::ExperimentConfig load_config(const std::string& path) {
  const std::string text = qcd::read_text_file(path);
  const nlohmann::json j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw qcd::ConfigError("config is not valid json: " + path);
  return qcd::ExperimentConfig::from_json(j);
}

void print_aggregate(const qcd::ExperimentResult& res) {
  std::printf("%-22s %12s %8s %8s %10s %12s %10s\n", "detector", "B", "pfa", "add", "far",
              "cadd", "regret");
  for (const qcd::AggregateRow& r : res.aggregate)
    std::printf("%-22s %12.4g %8.3f %8.2f %10.3g %12.2f %10.2f\n", r.detector.c_str(),
                r.threshold, r.pfa, r.add, r.far, r.cadd, r.regret);
  std::printf("outputs in %s\n", res.out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"change detection experiment harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false, no_plots = false;
  int workers = -1;
  double b_min = 0.0, b_max = 0.0;
  int b_count = 0;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (json)")->required();
    cmd->add_option("--out", out_dir, "output directory")->required();
    cmd->add_option("--seed", seed, "override master_seed")->each([&](const std::string&) {
      seed_set = true;
    });
    cmd->add_option("--workers", workers, "worker threads (0 = all available)");
    cmd->add_flag("--no-plots", no_plots, "skip svg outputs");
  };

  CLI::App* cmd_run = app.add_subcommand("run", "grid experiment over the threshold grid");
  add_common(cmd_run);
  CLI::App* cmd_sweep = app.add_subcommand("sweep", "run with the threshold grid from flags");
  add_common(cmd_sweep);
  cmd_sweep->add_option("--b-min", b_min, "smallest threshold")->required();
  cmd_sweep->add_option("--b-max", b_max, "largest threshold")->required();
  cmd_sweep->add_option("--b-count", b_count, "grid size (log-spaced)")->required();
  CLI::App* cmd_ablate = app.add_subcommand("ablate", "twr annealing/penalty variants vs oracle");
  add_common(cmd_ablate);
  CLI::App* cmd_multi = app.add_subcommand("multi", "piecewise-stationary multi-change protocol");
  add_common(cmd_multi);
  CLI::App* cmd_trace = app.add_subcommand("trace", "mean per-step log likelihood ratio curves");
  add_common(cmd_trace);

  CLI11_PARSE(app, argc, argv);

  try {
    qcd::ExperimentConfig cfg = load_config(config_path);
    if (seed_set) cfg.master_seed = seed;
    if (workers >= 0) cfg.workers = workers;
    if (no_plots) cfg.emit_plots = false;

    if (cmd_run->parsed()) {
      print_aggregate(qcd::run_experiment(cfg, out_dir));
    } else if (cmd_sweep->parsed()) {
      if (!(b_min > 0.0) || !(b_max >= b_min) || b_count < 1)
        throw qcd::ConfigError("sweep needs 0 < b-min <= b-max and b-count >= 1");
      cfg.thresholds.clear();
      for (int i = 0; i < b_count; ++i) {
        const double f = b_count == 1 ? 0.0 : static_cast<double>(i) / (b_count - 1);
        cfg.thresholds.push_back(std::exp(std::log(b_min) + f * (std::log(b_max) - std::log(b_min))));
      }
      print_aggregate(qcd::run_experiment(cfg, out_dir));
    } else if (cmd_ablate->parsed()) {
      print_aggregate(qcd::run_ablation(cfg, out_dir));
    } else if (cmd_multi->parsed()) {
      const qcd::MultiChangeResult res = qcd::run_multi_change(cfg, out_dir);
      std::printf("trials %ld, changes %ld, all-in-order %.3f, false alarms %ld\n", res.n_trials,
                  res.n_changes, res.frac_all_in_order, res.false_alarms);
      for (long k = 0; k < res.n_changes; ++k)
        std::printf("  change %ld: detected %ld, missed %ld, mean delay %.2f\n", k + 1,
                    res.detected[k], res.missed[k], res.mean_delay[k]);
      std::printf("outputs in %s\n", out_dir.c_str());
    } else if (cmd_trace->parsed()) {
      qcd::run_llr_trace(cfg, out_dir);
      std::printf("outputs in %s\n", out_dir.c_str());
    }
  } catch (const qcd::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const qcd::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
