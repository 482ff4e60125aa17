#include "iclkit/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace iclkit {

using nlohmann::json;

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig cfg;
  cfg.stream.synthetic.proportions = {0.40, 0.22, 0.12, 0.08, 0.06, 0.05, 0.04, 0.03};
  cfg.stream.synthetic.total_samples = 8000;
  cfg.stream.synthetic.feature_dim = 16;
  cfg.stream.synthetic.difficulty = 0.65;
  cfg.stream.synthetic.min_per_class = cfg.memory_budget + 1;
  cfg.model.input = nn::InputSig{false, 16, {}};
  cfg.model.dense_hidden = {48};
  cfg.model.split_index = 1;
  cfg.model.feature_dim = 16;
  return cfg;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> errors;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };

  check(stream.source == "synthetic" || stream.source == "table" ||
            stream.source == "image_folders",
        "stream.source: must be one of synthetic|table|image_folders");
  if (stream.source == "synthetic") {
    try {
      stream.synthetic.validate();
    } catch (const Error& e) {
      errors.push_back(std::string("stream.synthetic: ") + e.what());
    }
  } else {
    check(!stream.path.empty(), "stream.path: required for source '" + stream.source + "'");
  }
  check(stream.initial_classes >= 1, "stream.initial_classes: must be >= 1");
  check(stream.per_step >= 1, "stream.per_step: must be >= 1");
  check(stream.test_fraction > 0 && stream.test_fraction < 1,
        "stream.test_fraction: must be in (0,1)");
  check(stream.delimiter.size() == 1, "stream.delimiter: must be a single character");

  check(model.feature_dim >= 1, "model.feature_dim: must be >= 1");
  check(model.split_index >= 0 && model.split_index <= model.unit_count(),
        "model.split_index: out of range for the layer list");

  try {
    plan.validate();
  } catch (const Error& e) {
    errors.push_back(std::string("train: ") + e.what());
  }
  check(memory_budget >= 1, "memory_budget: must be >= 1");
  check(!seeds.empty(), "seeds: at least one seed is required");
  check(!out_dir.empty(), "out_dir: must not be empty");

  if (!errors.empty()) {
    std::string joined;
    for (const auto& e : errors) joined += "\n  - " + e;
    raise(ErrorKind::config, "invalid configuration:" + joined);
  }
}

namespace {

// Reads a field if present, collecting type errors instead of throwing.
template <typename T>
void read_field(const json& j, const char* key, T& out, std::vector<std::string>& errors,
                const std::string& scope) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    errors.push_back(scope + "." + key + ": wrong type");
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    raise(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }

  ExperimentConfig cfg = ExperimentConfig::defaults();
  std::vector<std::string> errors;

  if (j.contains("stream")) {
    const json& s = j["stream"];
    read_field(s, "source", cfg.stream.source, errors, "stream");
    read_field(s, "path", cfg.stream.path, errors, "stream");
    read_field(s, "label_column", cfg.stream.label_column, errors, "stream");
    read_field(s, "delimiter", cfg.stream.delimiter, errors, "stream");
    read_field(s, "initial_classes", cfg.stream.initial_classes, errors, "stream");
    read_field(s, "per_step", cfg.stream.per_step, errors, "stream");
    read_field(s, "test_fraction", cfg.stream.test_fraction, errors, "stream");
    read_field(s, "data_seed", cfg.stream.data_seed, errors, "stream");
    read_field(s, "split_seed", cfg.stream.split_seed, errors, "stream");
    if (s.contains("synthetic")) {
      const json& g = s["synthetic"];
      read_field(g, "proportions", cfg.stream.synthetic.proportions, errors,
                 "stream.synthetic");
      read_field(g, "total_samples", cfg.stream.synthetic.total_samples, errors,
                 "stream.synthetic");
      read_field(g, "feature_dim", cfg.stream.synthetic.feature_dim, errors,
                 "stream.synthetic");
      read_field(g, "difficulty", cfg.stream.synthetic.difficulty, errors,
                 "stream.synthetic");
      read_field(g, "image_mode", cfg.stream.synthetic.image_mode, errors,
                 "stream.synthetic");
      if (g.contains("image_shape")) {
        try {
          auto v = g.at("image_shape").get<std::vector<int>>();
          if (v.size() != 3) throw json::type_error::create(302, "size", nullptr);
          cfg.stream.synthetic.image_shape = ad::ImageShape{v[0], v[1], v[2]};
        } catch (const json::exception&) {
          errors.push_back("stream.synthetic.image_shape: expected [channels,height,width]");
        }
      }
    }
  }

  if (j.contains("model")) {
    const json& m = j["model"];
    read_field(m, "dense_hidden", cfg.model.dense_hidden, errors, "model");
    read_field(m, "conv_channels", cfg.model.conv_channels, errors, "model");
    read_field(m, "split_index", cfg.model.split_index, errors, "model");
    read_field(m, "feature_dim", cfg.model.feature_dim, errors, "model");
    read_field(m, "bias", cfg.model.bias, errors, "model");
    read_field(m, "init_weights_file", cfg.model.init_weights_file, errors, "model");
    if (m.contains("activation")) {
      try {
        cfg.model.activation =
            nn::activation_from_string(m.at("activation").get<std::string>());
      } catch (const Error& e) {
        errors.push_back(std::string("model.activation: ") + e.what());
      } catch (const json::exception&) {
        errors.push_back("model.activation: wrong type");
      }
    }
    if (m.contains("branch_init")) {
      std::string v;
      read_field(m, "branch_init", v, errors, "model");
      if (v == "warm_start")
        cfg.model.branch_init = BranchInit::warm_start;
      else if (v == "random")
        cfg.model.branch_init = BranchInit::random_init;
      else if (!v.empty())
        errors.push_back("model.branch_init: must be warm_start|random");
    }
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    read_field(t, "epochs_initial", cfg.plan.epochs_initial, errors, "train");
    read_field(t, "epochs_incremental", cfg.plan.epochs_incremental, errors, "train");
    read_field(t, "batch_size", cfg.plan.batch_size, errors, "train");
    read_field(t, "learning_rate", cfg.plan.optimizer.learning_rate, errors, "train");
    read_field(t, "lr_final", cfg.plan.optimizer.lr_final, errors, "train");
    read_field(t, "momentum", cfg.plan.optimizer.momentum, errors, "train");
    read_field(t, "weight_decay", cfg.plan.optimizer.weight_decay, errors, "train");
    read_field(t, "clip_norm", cfg.plan.optimizer.clip_norm, errors, "train");
    read_field(t, "augment", cfg.plan.augment_data, errors, "train");
    if (t.contains("alternation")) {
      std::string v;
      read_field(t, "alternation", v, errors, "train");
      if (v == "per_epoch")
        cfg.plan.alternation = Alternation::per_epoch;
      else if (v == "per_batch")
        cfg.plan.alternation = Alternation::per_batch;
      else if (!v.empty())
        errors.push_back("train.alternation: must be per_epoch|per_batch");
    }
  }

  if (j.contains("loss")) {
    const json& l = j["loss"];
    read_field(l, "lambda1", cfg.plan.loss.lambda1, errors, "loss");
    read_field(l, "lambda2", cfg.plan.loss.lambda2, errors, "loss");
    read_field(l, "lambda3", cfg.plan.loss.lambda3, errors, "loss");
    read_field(l, "lambda4", cfg.plan.loss.lambda4, errors, "loss");
    read_field(l, "lambda5", cfg.plan.loss.lambda5, errors, "loss");
    read_field(l, "beta_new", cfg.plan.loss.beta_new, errors, "loss");
    read_field(l, "gamma_new", cfg.plan.loss.gamma_new, errors, "loss");
    read_field(l, "beta_old", cfg.plan.loss.beta_old, errors, "loss");
    read_field(l, "gamma_old", cfg.plan.loss.gamma_old, errors, "loss");
    read_field(l, "margin", cfg.plan.loss.margin_m, errors, "loss");
    read_field(l, "top_k", cfg.plan.loss.top_k, errors, "loss");
  }

  if (j.contains("learner")) {
    try {
      cfg.learner = learner_from_string(j.at("learner").get<std::string>());
    } catch (const Error& e) {
      errors.push_back(std::string("learner: ") + e.what());
    } catch (const json::exception&) {
      errors.push_back("learner: wrong type");
    }
  }
  if (j.contains("variant")) {
    try {
      cfg.variant = variant_from_string(j.at("variant").get<std::string>());
    } catch (const Error& e) {
      errors.push_back(std::string("variant: ") + e.what());
    } catch (const json::exception&) {
      errors.push_back("variant: wrong type");
    }
  }
  read_field(j, "memory_budget", cfg.memory_budget, errors, "config");
  read_field(j, "seeds", cfg.seeds, errors, "config");
  read_field(j, "out_dir", cfg.out_dir, errors, "config");

  if (!errors.empty()) {
    std::string joined;
    for (const auto& e : errors) joined += "\n  - " + e;
    raise(ErrorKind::config, "invalid configuration:" + joined);
  }
  cfg.stream.synthetic.min_per_class = cfg.memory_budget + 1;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["stream"] = {{"source", cfg.stream.source},
                 {"path", cfg.stream.path},
                 {"label_column", cfg.stream.label_column},
                 {"delimiter", cfg.stream.delimiter},
                 {"initial_classes", cfg.stream.initial_classes},
                 {"per_step", cfg.stream.per_step},
                 {"test_fraction", cfg.stream.test_fraction},
                 {"data_seed", cfg.stream.data_seed},
                 {"split_seed", cfg.stream.split_seed},
                 {"synthetic",
                  {{"proportions", cfg.stream.synthetic.proportions},
                   {"total_samples", cfg.stream.synthetic.total_samples},
                   {"feature_dim", cfg.stream.synthetic.feature_dim},
                   {"difficulty", cfg.stream.synthetic.difficulty},
                   {"image_mode", cfg.stream.synthetic.image_mode},
                   {"image_shape",
                    {cfg.stream.synthetic.image_shape.channels,
                     cfg.stream.synthetic.image_shape.height,
                     cfg.stream.synthetic.image_shape.width}}}}};
  j["model"] = {{"dense_hidden", cfg.model.dense_hidden},
                {"conv_channels", cfg.model.conv_channels},
                {"split_index", cfg.model.split_index},
                {"feature_dim", cfg.model.feature_dim},
                {"activation", nn::to_string(cfg.model.activation)},
                {"bias", cfg.model.bias},
                {"branch_init", cfg.model.branch_init == BranchInit::warm_start
                                    ? "warm_start"
                                    : "random"},
                {"init_weights_file", cfg.model.init_weights_file}};
  j["train"] = {{"epochs_initial", cfg.plan.epochs_initial},
                {"epochs_incremental", cfg.plan.epochs_incremental},
                {"batch_size", cfg.plan.batch_size},
                {"learning_rate", cfg.plan.optimizer.learning_rate},
                {"lr_final", cfg.plan.optimizer.lr_final},
                {"momentum", cfg.plan.optimizer.momentum},
                {"weight_decay", cfg.plan.optimizer.weight_decay},
                {"clip_norm", cfg.plan.optimizer.clip_norm},
                {"augment", cfg.plan.augment_data},
                {"alternation", cfg.plan.alternation == Alternation::per_epoch
                                    ? "per_epoch"
                                    : "per_batch"}};
  j["loss"] = {{"lambda1", cfg.plan.loss.lambda1}, {"lambda2", cfg.plan.loss.lambda2},
               {"lambda3", cfg.plan.loss.lambda3}, {"lambda4", cfg.plan.loss.lambda4},
               {"lambda5", cfg.plan.loss.lambda5}, {"beta_new", cfg.plan.loss.beta_new},
               {"gamma_new", cfg.plan.loss.gamma_new}, {"beta_old", cfg.plan.loss.beta_old},
               {"gamma_old", cfg.plan.loss.gamma_old}, {"margin", cfg.plan.loss.margin_m},
               {"top_k", cfg.plan.loss.top_k}};
  j["learner"] = to_string(cfg.learner);
  j["variant"] = to_string(cfg.variant);
  j["memory_budget"] = cfg.memory_budget;
  j["seeds"] = cfg.seeds;
  j["out_dir"] = cfg.out_dir;
  return j.dump(2) + "\n";
}

std::string config_template() {
  return R"(// iclkit experiment configuration. JSON with // comments.
// Any omitted field keeps the default shown here.
{
  "stream": {
    // synthetic | table | image_folders
    "source": "synthetic",
    // used when source != synthetic
    "path": "",
    "label_column": "label",
    "delimiter": ",",
    // class-incremental protocol: first step takes initial_classes,
    // every later step takes per_step classes
    "initial_classes": 4,
    "per_step": 1,
    "test_fraction": 0.2,
    // dataset generation seed (class order comes from "seeds" below)
    "data_seed": 7,
    "synthetic": {
      // per-class sample proportions; heavily skewed by default
      "proportions": [0.40, 0.22, 0.12, 0.08, 0.06, 0.05, 0.04, 0.03],
      "total_samples": 8000,
      "feature_dim": 16,
      // 0 = well-separated clusters, 1 = heavy overlap
      "difficulty": 0.65,
      // set true to generate small textured images instead of vectors
      "image_mode": false,
      "image_shape": [1, 16, 16]
    }
  },
  "model": {
    // vector-mode hidden widths; split_index of them stay in the shared
    // low-level extractor, the rest (plus the d-projection) form a branch
    "dense_hidden": [48],
    // image-mode conv widths (used when the stream is image-shaped)
    "conv_channels": [8, 16],
    "split_index": 1,
    // d: output width of every branch
    "feature_dim": 16,
    "activation": "tanh",
    "bias": true,
    // warm_start copies the previous branch at expansion; random reinitializes
    "branch_init": "warm_start",
    // optional checkpoint whose matching parameters seed the fresh model
    "init_weights_file": ""
  },
  "train": {
    "epochs_initial": 30,
    "epochs_incremental": 20,
    "batch_size": 32,
    "learning_rate": 0.1,
    "lr_final": 0.0001,
    "momentum": 0.9,
    "weight_decay": 0.0005,
    // 0 disables gradient clipping
    "clip_norm": 0.0,
    "augment": true,
    // per_epoch: one full epoch per objective; per_batch: both on each batch
    "alternation": "per_epoch"
  },
  "loss": {
    "lambda1": 1.0,
    "lambda2": 0.5,
    "lambda3": 1.0,
    "lambda4": 1.0,
    "lambda5": 1.0,
    "beta_new": 0.9,
    "gamma_new": 1.0,
    "beta_old": 0.99,
    "gamma_old": 2.0,
    "margin": 0.2,
    "top_k": 2
  },
  // proposed | finetune_only | replay_only
  "learner": "proposed",
  // full | no_old_objective | no_aux | no_dist | no_margin | no_expansion
  "variant": "full",
  "memory_budget": 20,
  "seeds": [1, 2, 3],
  "out_dir": "runs/exp"
}
)";
}

Dataset dataset_from_config(const StreamConfig& stream) {
  if (stream.source == "synthetic") return generate_skewed(stream.synthetic, stream.data_seed);
  IngestFormat fmt;
  if (stream.source == "table") {
    fmt.kind = IngestFormat::Kind::delimited_table;
    fmt.label_column = stream.label_column;
    fmt.delimiter = stream.delimiter[0];
  } else if (stream.source == "image_folders") {
    fmt.kind = IngestFormat::Kind::image_folders;
  } else {
    raise(ErrorKind::config, "unknown stream source '" + stream.source + "'");
  }
  return ingest(stream.path, fmt);
}

IncrementalStream stream_from_config(const StreamConfig& stream, const Dataset& data,
                                     std::uint64_t class_order_seed) {
  return make_stream(data, stream.initial_classes, stream.per_step, class_order_seed,
                     stream.test_fraction, stream.split_seed);
}

}  // namespace iclkit
