// iclkit: batch experiment runner for class-incremental continual learning.
//
// Subcommands: init-config, run, ablate, report, plot.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "iclkit/experiment.hpp"

namespace {

using iclkit::AblationVariant;
using iclkit::ExperimentConfig;

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  iclkit::require(static_cast<bool>(out), iclkit::ErrorKind::io, "cannot write " + path);
  out << text;
}

ExperimentConfig load_with_overrides(const std::string& config_path,
                                     const std::vector<std::uint64_t>& seeds,
                                     const std::string& out_dir,
                                     const std::string& learner,
                                     const std::string& variant) {
  ExperimentConfig cfg = iclkit::load_config_file(config_path);
  if (!seeds.empty()) cfg.seeds = seeds;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (!learner.empty()) cfg.learner = iclkit::learner_from_string(learner);
  if (!variant.empty()) cfg.variant = iclkit::variant_from_string(variant);
  cfg.validate();
  return cfg;
}

void print_summary(const iclkit::ExperimentSummary& summary) {
  std::cout << "learner=" << summary.learner << " variant=" << summary.variant << "\n"
            << "  Acc     " << iclkit::format_percent(summary.acc) << "\n"
            << "  Fgt     " << iclkit::format_percent(summary.fgt) << "\n"
            << "  Acc_new " << iclkit::format_percent(summary.acc_new) << "\n"
            << "  Acc_old " << iclkit::format_percent(summary.acc_old) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iclkit: class-incremental continual-learning experiments"};
  app.require_subcommand(1);

  // init-config
  auto* init = app.add_subcommand("init-config", "write a documented config template");
  std::string init_out = "experiment.json";
  init->add_option("--out", init_out, "template path (default experiment.json)");

  // run
  auto* run = app.add_subcommand("run", "run the configured experiment");
  std::string run_config;
  std::vector<std::uint64_t> run_seeds;
  std::string run_out, run_learner, run_variant;
  run->add_option("--config", run_config, "experiment config file")->required();
  run->add_option("--seeds", run_seeds, "override the config's seed list");
  run->add_option("--out", run_out, "override the output directory");
  run->add_option("--learner", run_learner, "proposed|finetune_only|replay_only");
  run->add_option("--variant", run_variant,
                  "full|no_old_objective|no_aux|no_dist|no_margin|no_expansion");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "run a set of ablation variants");
  std::string ab_config, ab_out;
  std::vector<std::uint64_t> ab_seeds;
  std::vector<std::string> ab_variants;
  ablate->add_option("--config", ab_config, "experiment config file")->required();
  ablate->add_option("--seeds", ab_seeds, "override the config's seed list");
  ablate->add_option("--out", ab_out, "override the output directory");
  ablate->add_option("--variants", ab_variants, "variants to run (default: all)");

  // report
  auto* report = app.add_subcommand("report", "tabulate completed experiment directories");
  std::vector<std::string> report_dirs;
  std::string report_out;
  report->add_option("dirs", report_dirs, "experiment directories")->required();
  report->add_option("--out", report_out, "also write report.txt/report.tsv here");

  // plot
  auto* plot = app.add_subcommand("plot", "render per-step curves for experiments");
  std::vector<std::string> plot_dirs;
  std::string plot_out = ".";
  plot->add_option("dirs", plot_dirs, "experiment directories")->required();
  plot->add_option("--out", plot_out, "output directory for the images");

  CLI11_PARSE(app, argc, argv);

  try {
    if (init->parsed()) {
      write_file(init_out, iclkit::config_template());
      std::cout << "wrote " << init_out << "\n";
    } else if (run->parsed()) {
      ExperimentConfig cfg =
          load_with_overrides(run_config, run_seeds, run_out, run_learner, run_variant);
      print_summary(iclkit::run_experiment(cfg));
      std::cout << "artifacts in " << cfg.out_dir << "\n";
    } else if (ablate->parsed()) {
      ExperimentConfig cfg = load_with_overrides(ab_config, ab_seeds, ab_out, "", "");
      std::vector<AblationVariant> variants;
      if (ab_variants.empty()) {
        variants = {AblationVariant::full,      AblationVariant::no_old_objective,
                    AblationVariant::no_aux,    AblationVariant::no_dist,
                    AblationVariant::no_margin, AblationVariant::no_expansion};
      } else {
        for (const auto& v : ab_variants)
          variants.push_back(iclkit::variant_from_string(v));
      }
      for (const auto& summary : iclkit::run_ablation_suite(cfg, variants))
        print_summary(summary);
      std::cout << "artifacts in " << cfg.out_dir << "\n";
    } else if (report->parsed()) {
      iclkit::ReportTables tables = iclkit::report_runs(report_dirs);
      std::cout << tables.aligned;
      if (!report_out.empty()) {
        std::filesystem::create_directories(report_out);
        write_file((std::filesystem::path(report_out) / "report.txt").string(),
                   tables.aligned);
        write_file((std::filesystem::path(report_out) / "report.tsv").string(),
                   tables.tsv);
      }
    } else if (plot->parsed()) {
      iclkit::plot_runs(plot_dirs, plot_out);
      std::cout << "plots in " << plot_out << "\n";
    }
  } catch (const iclkit::Error& e) {
    nlohmann::json err{{"error", iclkit::error_kind_name(e.kind())},
                       {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", "internal"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 2;
  }
  return 0;
}
