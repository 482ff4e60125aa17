#include "iclkit/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "iclkit/checkpoint.hpp"
#include "iclkit/plot.hpp"
#include "iclkit/trainer.hpp"
#include "iclkit/version.hpp"

namespace iclkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  require(static_cast<bool>(out), ErrorKind::io, "short write to " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

json epoch_log_json(const EpochLog& log) {
  return json{{"step", log.step},
              {"epoch", log.epoch},
              {"phase", log.phase == Phase::new_classes ? "new" : "old"},
              {"loss", log.loss.total},
              {"l_class", log.loss.l_class},
              {"l_aux", log.loss.l_aux},
              {"l_dist", log.loss.l_dist},
              {"l_marg", log.loss.l_marg},
              {"lr", log.lr},
              {"batches", log.batches}};
}

json manifest_json(const Dataset& data, const IncrementalStream& stream,
                   const StreamConfig& cfg) {
  json per_class = json::object();
  for (auto& [label, count] : data.class_counts()) {
    json entry;
    entry["total"] = count;
    auto it = stream.test_by_class.find(label);
    int n_test = it == stream.test_by_class.end() ? 0
                                                  : static_cast<int>(it->second.size());
    entry["test"] = n_test;
    entry["train"] = count - n_test;
    if (it != stream.test_by_class.end()) {
      std::vector<int> idx;
      for (const auto& s : it->second) idx.push_back(s.origin.index);
      entry["test_indices"] = idx;
    }
    if (label < static_cast<int>(data.class_names.size()))
      entry["name"] = data.class_names[label];
    per_class[std::to_string(label)] = entry;
  }
  json steps = json::array();
  for (const auto& step : stream.steps) steps.push_back(step.classes);
  return json{{"classes", per_class},
              {"steps", steps},
              {"class_order", stream.class_order},
              {"class_order_seed", stream.class_order_seed},
              {"data_seed", cfg.data_seed},
              {"split_seed", cfg.split_seed},
              {"test_fraction", cfg.test_fraction}};
}

json memory_manifest_json(const ExemplarMemory& memory) {
  json per_class = json::object();
  for (const auto& [label, list] : memory.by_class()) {
    json entries = json::array();
    for (const auto& s : list)
      entries.push_back({{"step", s.origin.step}, {"index", s.origin.index}});
    per_class[std::to_string(label)] = entries;
  }
  return json{{"budget", memory.budget()}, {"exemplars", per_class}};
}

// Per-step curve values: mean seen-class accuracy and the forgetting term.
std::pair<std::vector<double>, std::vector<double>> step_curves(const AccuracyMatrix& m) {
  std::vector<double> acc, fgt;
  for (int t = 1; t <= m.steps(); ++t) {
    double a = 0;
    for (int i = 1; i <= t; ++i) a += m.at(i, t);
    acc.push_back(a / t);
    if (t == 1) {
      fgt.push_back(0.0);
    } else {
      double f = 0;
      for (int i = 1; i < t; ++i) {
        double peak = -1.0;
        for (int j = i; j < t; ++j) peak = std::max(peak, m.at(i, j));
        f += peak - m.at(i, t);
      }
      fgt.push_back(f / (t - 1));
    }
  }
  return {acc, fgt};
}

json summary_json(const ExperimentSummary& s) {
  json runs = json::array();
  for (const auto& r : s.runs)
    runs.push_back({{"seed", r.seed},
                    {"acc", r.acc},
                    {"fgt", r.fgt},
                    {"acc_new", r.acc_new},
                    {"acc_old", r.acc_old}});
  return json{{"learner", s.learner},
              {"variant", s.variant},
              {"runs", runs},
              {"acc", {{"mean", s.acc.mean}, {"std", s.acc.stddev}}},
              {"fgt", {{"mean", s.fgt.mean}, {"std", s.fgt.stddev}}},
              {"acc_new", {{"mean", s.acc_new.mean}, {"std", s.acc_new.stddev}}},
              {"acc_old", {{"mean", s.acc_old.mean}, {"std", s.acc_old.stddev}}}};
}

ExperimentSummary summary_from_json(const json& j) {
  ExperimentSummary s;
  s.learner = j.at("learner").get<std::string>();
  s.variant = j.at("variant").get<std::string>();
  for (const auto& r : j.at("runs")) {
    SeedRun run;
    run.seed = r.at("seed").get<std::uint64_t>();
    run.acc = r.at("acc").get<double>();
    run.fgt = r.at("fgt").get<double>();
    run.acc_new = r.at("acc_new").get<double>();
    run.acc_old = r.at("acc_old").get<double>();
    s.runs.push_back(run);
  }
  auto ms = [&](const char* key) {
    return MeanStd{j.at(key).at("mean").get<double>(), j.at(key).at("std").get<double>()};
  };
  s.acc = ms("acc");
  s.fgt = ms("fgt");
  s.acc_new = ms("acc_new");
  s.acc_old = ms("acc_old");
  return s;
}

void write_experiment_plots(const fs::path& dir, const ExperimentSummary& summary) {
  if (summary.runs.empty()) return;
  const int steps = summary.runs[0].matrix.steps();
  std::vector<double> xs;
  for (int t = 1; t <= steps; ++t) xs.push_back(t);

  std::vector<double> acc_mean(steps, 0.0), fgt_mean(steps, 0.0);
  for (const auto& run : summary.runs) {
    auto [acc, fgt] = step_curves(run.matrix);
    for (int t = 0; t < steps; ++t) {
      acc_mean[t] += acc[t] / summary.runs.size();
      fgt_mean[t] += fgt[t] / summary.runs.size();
    }
  }
  plot::ChartSpec acc_spec;
  acc_spec.title = summary.learner + " (" + summary.variant + "): accuracy per step";
  acc_spec.x_label = "step";
  acc_spec.y_label = "accuracy";
  acc_spec.y_min = 0.0;
  acc_spec.y_max = 1.0;
  plot::write_line_chart_png((dir / "accuracy_vs_step.png").string(), acc_spec,
                             {{"seed mean", xs, acc_mean}});
  plot::ChartSpec fgt_spec;
  fgt_spec.title = summary.learner + " (" + summary.variant + "): forgetting per step";
  fgt_spec.x_label = "step";
  fgt_spec.y_label = "forgetting";
  plot::write_line_chart_png((dir / "forgetting_vs_step.png").string(), fgt_spec,
                             {{"seed mean", xs, fgt_mean}});
}

}  // namespace

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= values.size();
  if (values.size() >= 2) {
    double sq = 0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(sq / (values.size() - 1));
  }
  return out;
}

std::string format_percent(const MeanStd& value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f+/-%.1f", 100.0 * value.mean, 100.0 * value.stddev);
  return buf;
}

ExperimentSummary run_experiment(const ExperimentConfig& config) {
  config.validate();
  fs::path dir(config.out_dir);
  fs::create_directories(dir);
  write_text(dir / "config.json", config_to_json(config));
  write_text(dir / "run_meta.json",
             json{{"iclkit_version", kVersion},
                  {"checkpoint_format", kCheckpointMagic}}
                     .dump(2) +
                 "\n");
  write_text(dir / "status.json", json{{"status", "running"}}.dump() + "\n");

  Dataset data = dataset_from_config(config.stream);

  ExperimentSummary summary;
  summary.learner = to_string(config.learner);
  summary.variant = to_string(config.variant);

  for (std::uint64_t seed : config.seeds) {
    fs::path seed_dir = dir / ("seed_" + std::to_string(seed));
    fs::create_directories(seed_dir);

    IncrementalStream stream = stream_from_config(config.stream, data, seed);
    write_text(seed_dir / "dataset_manifest.json",
               manifest_json(data, stream, config.stream).dump(2) + "\n");

    std::ofstream log_out(seed_dir / "train_log.jsonl", std::ios::trunc);
    StepCallbacks callbacks;
    callbacks.on_epoch = [&](const EpochLog& log) {
      log_out << epoch_log_json(log).dump() << "\n";
    };
    callbacks.after_step = [&](const ExpandingModel& model, int step) {
      if (step >= 2)
        save_checkpoint(model,
                        (seed_dir / ("ckpt_step_" + std::to_string(step) + ".bin")).string());
    };
    callbacks.after_memory = [&](const ExemplarMemory& memory, int step) {
      write_text(seed_dir / ("memory_step_" + std::to_string(step) + ".json"),
                 memory_manifest_json(memory).dump(2) + "\n");
    };

    TrainPlan plan = config.plan;
    plan.seed = seed;
    Trainer trainer(plan, LearnerSpec{config.learner, config.variant, config.memory_budget});
    RunResult result = trainer.run(stream, config.model, callbacks);

    SeedRun run;
    run.seed = seed;
    run.matrix = result.matrix;
    run.acc = overall_acc(result.matrix);
    run.fgt = forgetting(result.matrix);
    std::tie(run.acc_new, run.acc_old) = acc_new_old(result.matrix);

    write_text(seed_dir / "accuracy_matrix.csv", result.matrix.to_csv());
    write_text(seed_dir / "metrics.json",
               json{{"seed", seed},
                    {"acc", run.acc},
                    {"fgt", run.fgt},
                    {"acc_new", run.acc_new},
                    {"acc_old", run.acc_old}}
                       .dump(2) +
                   "\n");
    summary.runs.push_back(std::move(run));
  }

  std::vector<double> acc, fgt, anew, aold;
  for (const auto& r : summary.runs) {
    acc.push_back(r.acc);
    fgt.push_back(r.fgt);
    anew.push_back(r.acc_new);
    aold.push_back(r.acc_old);
  }
  summary.acc = mean_std(acc);
  summary.fgt = mean_std(fgt);
  summary.acc_new = mean_std(anew);
  summary.acc_old = mean_std(aold);

  write_text(dir / "summary.json", summary_json(summary).dump(2) + "\n");
  std::string text = "learner=" + summary.learner + " variant=" + summary.variant +
                     " seeds=" + std::to_string(summary.runs.size()) + "\n" +
                     "Acc     " + format_percent(summary.acc) + "\n" +
                     "Fgt     " + format_percent(summary.fgt) + "\n" +
                     "Acc_new " + format_percent(summary.acc_new) + "\n" +
                     "Acc_old " + format_percent(summary.acc_old) + "\n";
  write_text(dir / "summary.txt", text);
  write_experiment_plots(dir, summary);
  write_text(dir / "status.json", json{{"status", "complete"}}.dump() + "\n");
  return summary;
}

std::vector<ExperimentSummary> run_ablation_suite(
    const ExperimentConfig& config, const std::vector<AblationVariant>& variants) {
  require(!variants.empty(), ErrorKind::usage, "no ablation variants given");
  std::vector<ExperimentSummary> out;
  std::vector<std::string> dirs;
  for (AblationVariant v : variants) {
    ExperimentConfig sub = config;
    sub.learner = LearnerKind::proposed;
    sub.variant = v;
    sub.out_dir = (fs::path(config.out_dir) / to_string(v)).string();
    out.push_back(run_experiment(sub));
    dirs.push_back(sub.out_dir);
  }
  ReportTables tables = report_runs(dirs);
  fs::create_directories(config.out_dir);
  write_text(fs::path(config.out_dir) / "ablation_table.txt", tables.aligned);
  write_text(fs::path(config.out_dir) / "ablation_table.tsv", tables.tsv);
  return out;
}

ReportTables report_runs(const std::vector<std::string>& run_dirs) {
  require(!run_dirs.empty(), ErrorKind::usage, "no run directories given");
  struct Row {
    std::string name, learner, variant, acc, fgt, acc_new, acc_old;
  };
  std::vector<Row> rows;
  for (const auto& d : run_dirs) {
    fs::path dir(d);
    require(fs::exists(dir / "summary.json"), ErrorKind::usage,
            d + " is not a completed run directory (missing summary.json)");
    if (fs::exists(dir / "status.json")) {
      json status = json::parse(read_text(dir / "status.json"));
      require(status.value("status", "") == "complete", ErrorKind::usage,
              d + " is incomplete (status=" + status.value("status", "?") + ")");
    }
    ExperimentSummary s = summary_from_json(json::parse(read_text(dir / "summary.json")));
    rows.push_back({dir.filename().string(), s.learner, s.variant, format_percent(s.acc),
                    format_percent(s.fgt), format_percent(s.acc_new),
                    format_percent(s.acc_old)});
  }

  auto width = [&](auto get, const char* header) {
    std::size_t w = std::strlen(header);
    for (const auto& r : rows) w = std::max(w, get(r).size());
    return w;
  };
  auto name_w = width([](const Row& r) { return r.name; }, "run");
  auto learner_w = width([](const Row& r) { return r.learner; }, "learner");
  auto variant_w = width([](const Row& r) { return r.variant; }, "variant");
  auto acc_w = width([](const Row& r) { return r.acc; }, "Acc");
  auto fgt_w = width([](const Row& r) { return r.fgt; }, "Fgt");
  auto new_w = width([](const Row& r) { return r.acc_new; }, "Acc_new");
  auto old_w = width([](const Row& r) { return r.acc_old; }, "Acc_old");

  auto pad = [](const std::string& s, std::size_t w) {
    return s + std::string(w - s.size(), ' ');
  };
  std::string aligned = pad("run", name_w) + "  " + pad("learner", learner_w) + "  " +
                        pad("variant", variant_w) + "  " + pad("Acc", acc_w) + "  " +
                        pad("Fgt", fgt_w) + "  " + pad("Acc_new", new_w) + "  " +
                        pad("Acc_old", old_w) + "\n";
  std::string tsv = "run\tlearner\tvariant\tAcc\tFgt\tAcc_new\tAcc_old\n";
  for (const auto& r : rows) {
    aligned += pad(r.name, name_w) + "  " + pad(r.learner, learner_w) + "  " +
               pad(r.variant, variant_w) + "  " + pad(r.acc, acc_w) + "  " +
               pad(r.fgt, fgt_w) + "  " + pad(r.acc_new, new_w) + "  " +
               pad(r.acc_old, old_w) + "\n";
    tsv += r.name + "\t" + r.learner + "\t" + r.variant + "\t" + r.acc + "\t" + r.fgt +
           "\t" + r.acc_new + "\t" + r.acc_old + "\n";
  }
  return {aligned, tsv};
}

void plot_runs(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  require(!run_dirs.empty(), ErrorKind::usage, "no run directories given");
  fs::create_directories(out_dir);
  std::vector<plot::Series> acc_series, fgt_series;
  for (const auto& d : run_dirs) {
    fs::path dir(d);
    require(fs::exists(dir / "summary.json"), ErrorKind::usage,
            d + " is not a completed run directory (missing summary.json)");
    ExperimentSummary s = summary_from_json(json::parse(read_text(dir / "summary.json")));

    // per-seed matrices live in seed_<n>/accuracy_matrix.csv
    std::vector<double> acc_mean, fgt_mean, xs;
    int n = 0;
    for (const auto& run : s.runs) {
      fs::path mfile = dir / ("seed_" + std::to_string(run.seed)) / "accuracy_matrix.csv";
      require(fs::exists(mfile), ErrorKind::usage, mfile.string() + " is missing");
      AccuracyMatrix m = AccuracyMatrix::from_csv(read_text(mfile));
      auto [acc, fgt] = step_curves(m);
      if (acc_mean.empty()) {
        acc_mean.assign(acc.size(), 0.0);
        fgt_mean.assign(fgt.size(), 0.0);
        for (std::size_t t = 0; t < acc.size(); ++t) xs.push_back(double(t + 1));
      }
      for (std::size_t t = 0; t < acc.size(); ++t) {
        acc_mean[t] += acc[t];
        fgt_mean[t] += fgt[t];
      }
      ++n;
    }
    for (auto& v : acc_mean) v /= n;
    for (auto& v : fgt_mean) v /= n;
    std::string label = s.learner == "proposed" ? s.variant : s.learner;
    acc_series.push_back({label, xs, acc_mean});
    fgt_series.push_back({label, xs, fgt_mean});
  }
  plot::ChartSpec acc_spec;
  acc_spec.title = "accuracy per incremental step";
  acc_spec.x_label = "step";
  acc_spec.y_label = "accuracy";
  acc_spec.y_min = 0.0;
  acc_spec.y_max = 1.0;
  plot::write_line_chart_png((fs::path(out_dir) / "accuracy_vs_step.png").string(),
                             acc_spec, acc_series);
  plot::ChartSpec fgt_spec;
  fgt_spec.title = "forgetting per incremental step";
  fgt_spec.x_label = "step";
  fgt_spec.y_label = "forgetting";
  plot::write_line_chart_png((fs::path(out_dir) / "forgetting_vs_step.png").string(),
                             fgt_spec, fgt_series);
}

}  // namespace iclkit
