#include <benchmark/benchmark.h>

#include <random>

#include "iclkit/losses.hpp"
#include "iclkit/memory.hpp"

namespace {

iclkit::ModelSpec default_spec(int dim, int d) {
  iclkit::ModelSpec spec;
  spec.input = iclkit::nn::InputSig{false, dim, {}};
  spec.dense_hidden = {32};
  spec.split_index = 1;
  spec.feature_dim = d;
  return spec;
}

iclkit::ExpandingModel make_step3_model(int dim, int d) {
  iclkit::ExpandingModel model(default_spec(dim, d), {0, 1, 2, 3}, 42);
  model.expand({4});
  model.expand({5});
  return model;
}

Eigen::MatrixXd random_batch(int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd x(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) x(i, j) = dist(rng);
  return x;
}

void BM_ForwardFeatures(benchmark::State& state) {
  auto model = make_step3_model(16, 16);
  Eigen::MatrixXd x = random_batch(static_cast<int>(state.range(0)), 16, 7);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward_features(x));
}
BENCHMARK(BM_ForwardFeatures)->Arg(32)->Arg(128);

void BM_CompositeNewBackward(benchmark::State& state) {
  iclkit::ExpandingModel model(default_spec(16, 16), {0, 1, 2, 3}, 42);
  model.expand({4});
  iclkit::Snapshot snapshot = model.snapshot_for_distillation();
  model.expand({5});
  int n = static_cast<int>(state.range(0));
  iclkit::Batch batch;
  batch.x = random_batch(n, 16, 11);
  iclkit::ClassCounts counts;
  for (int c = 0; c <= 5; ++c) counts.add(c, 50);
  std::mt19937_64 rng(3);
  for (int i = 0; i < n; ++i) {
    batch.labels.push_back(static_cast<int>(rng() % 5));
    batch.is_memory.push_back(batch.labels.back() < 4);
  }
  iclkit::LossConfig cfg;
  cfg.top_k = 1;
  for (auto _ : state) {
    for (auto* p : model.all_params()) p->zero_grad();
    iclkit::ad::Tape tape;
    auto root = composite_new_node(tape, model, &snapshot, batch, counts, cfg);
    tape.backward(root);
    benchmark::DoNotOptimize(tape.value(root));
  }
}
BENCHMARK(BM_CompositeNewBackward)->Arg(32);

void BM_HerdingSelect(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  Eigen::MatrixXd f = random_batch(n, 16, 5);
  for (auto _ : state) benchmark::DoNotOptimize(iclkit::herding_select(f, 20));
}
BENCHMARK(BM_HerdingSelect)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
