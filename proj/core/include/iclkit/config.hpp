#pragma once

#include <string>
#include <vector>

#include "iclkit/data.hpp"
#include "iclkit/trainer.hpp"

namespace iclkit {

struct StreamConfig {
  std::string source = "synthetic";  // synthetic | table | image_folders
  SkewSpec synthetic;
  std::string path;  // table file or image-folder root
  std::string label_column = "label";
  std::string delimiter = ",";
  int initial_classes = 4;
  int per_step = 1;
  double test_fraction = 0.2;
  std::uint64_t data_seed = 7;
  std::uint64_t split_seed = kDefaultSplitSeed;
};

struct ExperimentConfig {
  StreamConfig stream;
  ModelSpec model;
  TrainPlan plan;
  LearnerKind learner = LearnerKind::proposed;
  AblationVariant variant = AblationVariant::full;
  int memory_budget = 20;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out_dir = "runs/exp";

  // Desk-scale defaults: an 8-class 16-dimensional stream whose class
  // proportions follow a heavily skewed head/tail profile.
  static ExperimentConfig defaults();
  void validate() const;
};

// Parses a config document (JSON; // comments allowed). Collects every field
// error before failing.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// Serializes a fully resolved config back to JSON.
std::string config_to_json(const ExperimentConfig& config);

// A documented starting-point config for `init-config`.
std::string config_template();

// Builds the dataset and stream a config describes, for one class-order seed.
Dataset dataset_from_config(const StreamConfig& stream);
IncrementalStream stream_from_config(const StreamConfig& stream, const Dataset& data,
                                     std::uint64_t class_order_seed);

}  // namespace iclkit
