// Shared toy setups for gradient checks and trainer tests.
#pragma once

#include <memory>

#include "iclkit/data.hpp"
#include "iclkit/losses.hpp"

namespace fixtures {

// A step-2 model small enough for finite-difference checks: scalar input,
// linear branches to d=2, classes {0,1} then {2}. Bias-free, so the full
// new-phase trainable set is branch W (2) + V (2) + U (6) + rho (1).
struct Tiny {
  iclkit::ModelSpec spec;
  std::unique_ptr<iclkit::ExpandingModel> model;
  std::unique_ptr<iclkit::Snapshot> snapshot;
  iclkit::Batch batch;
  iclkit::ClassCounts counts;
};

inline Tiny make_tiny_step2(std::uint64_t seed, int new_classes = 1) {
  Tiny t;
  t.spec.input = iclkit::nn::InputSig{false, 1, {}};
  t.spec.dense_hidden = {};
  t.spec.split_index = 0;
  t.spec.feature_dim = 2;
  t.spec.bias = false;
  t.spec.branch_init = iclkit::BranchInit::random_init;
  t.model = std::make_unique<iclkit::ExpandingModel>(t.spec, std::vector<int>{0, 1}, seed);
  t.snapshot = std::make_unique<iclkit::Snapshot>(t.model->snapshot_for_distillation());
  std::vector<int> fresh;
  for (int c = 0; c < new_classes; ++c) fresh.push_back(2 + c);
  t.model->expand(fresh);

  t.batch.x.resize(4, 1);
  t.batch.x << 0.7, -1.1, 0.4, 1.6;
  t.batch.labels = {0, 1, 2, 2};
  t.batch.is_memory = {1, 1, 0, 0};
  t.counts.add(0, 3);
  t.counts.add(1, 2);
  t.counts.add(2, 5);
  for (int c = 1; c < new_classes; ++c) t.counts.add(2 + c, 4);
  return t;
}

// Loss hyperparameters exercising every term with interior-friendly values.
inline iclkit::LossConfig tiny_loss_config() {
  iclkit::LossConfig cfg;
  cfg.lambda1 = 0.7;
  cfg.lambda2 = 1.3;
  cfg.lambda3 = 0.9;
  cfg.lambda4 = 1.1;
  cfg.lambda5 = 0.8;
  cfg.beta_new = 0.9;
  cfg.gamma_new = 1.0;
  cfg.beta_old = 0.99;
  cfg.gamma_old = 2.0;
  cfg.margin_m = 0.3;
  cfg.top_k = 1;
  return cfg;
}

// Well-separated Gaussian blobs for quick end-to-end training tests.
inline iclkit::Dataset make_blobs(int classes, int per_class, int dim,
                                  std::uint64_t seed) {
  iclkit::SkewSpec spec;
  spec.proportions.assign(classes, 1.0 / classes);
  spec.total_samples = classes * per_class;
  spec.feature_dim = dim;
  spec.difficulty = 0.1;
  spec.min_per_class = std::min(per_class, 2);
  return iclkit::generate_skewed(spec, seed);
}

inline iclkit::ModelSpec small_model_spec(int input_dim, int d = 8) {
  iclkit::ModelSpec spec;
  spec.input = iclkit::nn::InputSig{false, input_dim, {}};
  spec.dense_hidden = {16};
  spec.split_index = 1;
  spec.feature_dim = d;
  return spec;
}

}  // namespace fixtures
