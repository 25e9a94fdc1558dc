// Benchmark: the same trial workload through the serial and the OpenMP
// paths, timing both and asserting the output records are byte-identical.
// Trials are the unit of parallelism (each one carries its own seeds), so
// the two paths must agree exactly; the speedup is whatever the machine's
// core count buys.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

#include "qcd/experiment.hpp"
#include "qcd/trial_runner.hpp"

namespace {

qcd::ExperimentConfig bench_config(long trials, long horizon) {
  qcd::ExperimentConfig cfg;
  cfg.family.kind = qcd::FamilyKind::MlpGaussian;
  cfg.family.obs_dim = 2;
  cfg.family.param_dim = 2;
  cfg.family.widths = {16, 16};
  cfg.trials = trials;
  cfg.horizon = horizon;
  cfg.lambda = horizon / 2;
  cfg.target_kl = 0.3;
  cfg.thresholds = {5.0, 50.0};
  qcd::DetectorSpec twr;
  twr.type = "twr";
  twr.name = "twr";
  twr.twr.n_epochs = 10;
  cfg.detectors.push_back(twr);
  cfg.emit_plots = false;
  return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  long trials = 8, horizon = 120;
  for (int i = 1; i + 1 < argc; i += 2) {
    if (std::strcmp(argv[i], "--trials") == 0) trials = std::atol(argv[i + 1]);
    if (std::strcmp(argv[i], "--horizon") == 0) horizon = std::atol(argv[i + 1]);
  }
  const qcd::ExperimentConfig cfg = bench_config(trials, horizon);
  const std::string base = "bench_out";

  std::printf("workload: %ld trials, horizon %ld, %d workers available\n", trials, horizon,
              qcd::available_workers());

  const auto t_serial = std::chrono::steady_clock::now();
  qcd::run_experiment_serial(cfg, base + "/serial");
  const double serial_s = seconds_since(t_serial);
  std::printf("serial:   %.3f s\n", serial_s);

  const auto t_parallel = std::chrono::steady_clock::now();
  qcd::run_experiment(cfg, base + "/parallel");
  const double parallel_s = seconds_since(t_parallel);
  std::printf("parallel: %.3f s  (speedup %.2fx)\n", parallel_s, serial_s / parallel_s);

  const std::string a = qcd::read_text_file(base + "/serial/records.jsonl");
  const std::string b = qcd::read_text_file(base + "/parallel/records.jsonl");
  if (a != b) {
    std::fprintf(stderr, "FAIL: serial and parallel records differ\n");
    return 1;
  }
  std::printf("records identical across paths (%zu bytes)\n", a.size());
  return 0;
}
