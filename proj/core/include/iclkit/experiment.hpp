#pragma once

#include "iclkit/config.hpp"
#include "iclkit/metrics.hpp"

namespace iclkit {

struct SeedRun {
  std::uint64_t seed = 0;
  AccuracyMatrix matrix;
  double acc = 0, fgt = 0, acc_new = 0, acc_old = 0;
};

struct MeanStd {
  double mean = 0, stddev = 0;
};

struct ExperimentSummary {
  std::string learner;
  std::string variant;
  std::vector<SeedRun> runs;
  MeanStd acc, fgt, acc_new, acc_old;
};

// Executes every seed of the configured experiment and writes all artifacts
// (resolved config, per-seed run directories, summary, plots) under
// config.out_dir. Never touches the input dataset.
ExperimentSummary run_experiment(const ExperimentConfig& config);

// Runs the listed ablation variants as sub-experiments of config.out_dir and
// writes a combined table.
std::vector<ExperimentSummary> run_ablation_suite(const ExperimentConfig& config,
                                                  const std::vector<AblationVariant>& variants);

// Side-by-side comparison of completed experiment directories.
struct ReportTables {
  std::string aligned;  // human-readable
  std::string tsv;      // machine-readable
};
ReportTables report_runs(const std::vector<std::string>& run_dirs);

// Re-renders the per-step curve plots of completed experiment directories
// into <out_dir>/accuracy_vs_step.png and <out_dir>/forgetting_vs_step.png.
void plot_runs(const std::vector<std::string>& run_dirs, const std::string& out_dir);

// mean +/- sample standard deviation, formatted as percent ("94.5+/-0.8").
std::string format_percent(const MeanStd& value);

MeanStd mean_std(const std::vector<double>& values);

}  // namespace iclkit
