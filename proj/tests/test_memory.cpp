#include <doctest.h>

#include <random>
#include <set>

#include "iclkit/memory.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using iclkit::build_training_set;
using iclkit::CandidatePool;
using iclkit::Error;
using iclkit::ExemplarMemory;
using iclkit::herding_select;
using iclkit::StoredSample;

namespace {

Eigen::MatrixXd random_features(int n, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd f(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) f(i, j) = dist(rng);
  return f;
}

std::vector<StoredSample> class_pool(int label, int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<StoredSample> out;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x(dim);
    for (int j = 0; j < dim; ++j) x(j) = dist(rng);
    out.push_back(StoredSample{x, label, {1, i}});
  }
  return out;
}

}  // namespace

TEST_CASE("herding picks the sample at the class mean first") {
  Eigen::MatrixXd f(3, 2);
  f << 0, 0, 1, 0, 2, 0;
  auto order = herding_select(f, 1);
  REQUIRE(order.size() == 1);
  CHECK(order[0] == 1);
}

TEST_CASE("herding with budget >= n returns a permutation") {
  std::mt19937_64 rng(3);
  Eigen::MatrixXd f = random_features(6, 3, rng);
  auto order = herding_select(f, 100);
  CHECK(order.size() == 6);
  std::set<int> uniq(order.begin(), order.end());
  CHECK(uniq.size() == 6);
}

TEST_CASE("herding rejects empty input and bad budgets") {
  Eigen::MatrixXd empty(0, 3);
  CHECK_THROWS_AS(static_cast<void>(herding_select(empty, 1)), Error);
  Eigen::MatrixXd f(2, 2);
  f.setZero();
  CHECK_THROWS_AS(static_cast<void>(herding_select(f, 0)), Error);
}

TEST_CASE("herding equals the brute-force greedy oracle on small instances") {
  std::mt19937_64 rng(17);
  int trials = 0;
  while (trials < 60) {
    int n = 1 + static_cast<int>(rng() % 8);
    int d = 1 + static_cast<int>(rng() % 4);
    Eigen::MatrixXd f = random_features(n, d, rng);
    double gap = 0.0;
    oracles::herding_oracle(f, n, &gap);
    if (gap < 1e-9) continue;  // argmin tie, skip the degenerate draw
    int budget = 1 + static_cast<int>(rng() % n);
    CHECK(herding_select(f, budget) == oracles::herding_oracle(f, budget));
    ++trials;
  }
}

TEST_CASE("herding order is prefix-stable across budgets") {
  std::mt19937_64 rng(21);
  Eigen::MatrixXd f = random_features(9, 3, rng);
  auto full = herding_select(f, 9);
  for (int b = 1; b <= 9; ++b) {
    auto part = herding_select(f, b);
    REQUIRE(part.size() == static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) CHECK(part[i] == full[i]);
  }
}

TEST_CASE("rebuild_memory respects the budget and keeps small pools whole") {
  iclkit::ModelSpec spec = fixtures::small_model_spec(4);
  iclkit::ExpandingModel model(spec, {0, 1, 2, 3}, 5);
  iclkit::Snapshot snap(model);

  std::vector<CandidatePool> pools;
  pools.push_back({0, class_pool(0, 30, 4, 100)});
  pools.push_back({1, class_pool(1, 25, 4, 101)});
  pools.push_back({2, class_pool(2, 30, 4, 102)});
  pools.push_back({3, class_pool(3, 5, 4, 103)});  // below budget

  ExemplarMemory mem = iclkit::rebuild_memory(snap, pools, 20);
  CHECK(mem.total_size() <= 20 * 4);
  CHECK(mem.exemplars(0).size() == 20);
  CHECK(mem.exemplars(3).size() == 5);
  std::set<int> kept;
  for (const auto& s : mem.exemplars(3)) kept.insert(s.origin.index);
  CHECK(kept == std::set<int>{0, 1, 2, 3, 4});

  // deterministic reselection
  ExemplarMemory again = iclkit::rebuild_memory(snap, pools, 20);
  for (int label : {0, 1, 2, 3}) {
    REQUIRE(again.exemplars(label).size() == mem.exemplars(label).size());
    for (std::size_t i = 0; i < mem.exemplars(label).size(); ++i)
      CHECK(again.exemplars(label)[i].origin.index == mem.exemplars(label)[i].origin.index);
  }
}

TEST_CASE("rebuild_memory rejects a class with no candidates") {
  iclkit::ModelSpec spec = fixtures::small_model_spec(4);
  iclkit::ExpandingModel model(spec, {0}, 6);
  iclkit::Snapshot snap(model);
  std::vector<CandidatePool> pools{{0, {}}};
  CHECK_THROWS_AS(static_cast<void>(iclkit::rebuild_memory(snap, pools, 20)), Error);
}

TEST_CASE("build_training_set merges memory and incoming data") {
  ExemplarMemory mem(20);
  for (int label : {0, 1, 2, 3}) mem.replace_class(label, class_pool(label, 20, 4, label));
  auto incoming = class_pool(9, 500, 4, 55);
  auto set = build_training_set(mem, incoming);
  CHECK(set.samples.size() == 580);
  CHECK(set.counts.total() == 580);
  CHECK(set.counts.count(0) == 20);
  CHECK(set.counts.count(9) == 500);
  int memory_count = 0;
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    if (set.is_memory[i]) {
      ++memory_count;
      CHECK(set.samples[i].label != 9);
    }
  }
  CHECK(memory_count == 80);
}

TEST_CASE("empty memory yields S_1 = D_1") {
  ExemplarMemory mem(20);
  auto incoming = class_pool(0, 7, 3, 1);
  auto set = build_training_set(mem, incoming);
  CHECK(set.samples.size() == 7);
  for (auto flag : set.is_memory) CHECK_FALSE(static_cast<bool>(flag));
}

TEST_CASE("label overlap between memory and incoming is rejected") {
  ExemplarMemory mem(20);
  mem.replace_class(3, class_pool(3, 4, 3, 2));
  auto incoming = class_pool(3, 5, 3, 3);
  CHECK_THROWS_WITH_AS(static_cast<void>(build_training_set(mem, incoming)),
                       doctest::Contains("stream_contract"), Error);
}

TEST_CASE("memory rejects lists over budget or mislabeled") {
  ExemplarMemory mem(3);
  CHECK_THROWS_AS(mem.replace_class(0, class_pool(0, 4, 2, 4)), Error);
  auto wrong = class_pool(1, 2, 2, 5);
  CHECK_THROWS_AS(mem.replace_class(0, wrong), Error);
}
