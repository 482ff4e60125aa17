#include <doctest.h>

#include <map>
#include <random>

#include "iclkit/checkpoint.hpp"
#include "iclkit/losses.hpp"
#include "iclkit/model.hpp"
#include "support/fixtures.hpp"

using iclkit::cosine_softmax;
using iclkit::Error;
using iclkit::ErrorKind;
using iclkit::ExpandingModel;
using iclkit::ModelSpec;
using iclkit::Phase;

namespace {

ModelSpec vector_spec(int input_dim, int d, std::vector<int> hidden = {8}) {
  ModelSpec spec;
  spec.input = iclkit::nn::InputSig{false, input_dim, {}};
  spec.dense_hidden = std::move(hidden);
  spec.split_index = 1;
  spec.feature_dim = d;
  return spec;
}

Eigen::MatrixXd random_batch(int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd x(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) x(i, j) = dist(rng);
  return x;
}

iclkit::ad::Parameter* param_named(ExpandingModel& m, const std::string& name) {
  for (auto* p : m.all_params())
    if (p->name == name) return p;
  return nullptr;
}

}  // namespace

TEST_CASE("single branch forward is the branch output") {
  ExpandingModel m(vector_spec(10, 64), {0, 1}, 3);
  Eigen::MatrixXd z = m.forward_features(random_batch(2, 10, 1));
  CHECK(z.rows() == 2);
  CHECK(z.cols() == 64);
}

TEST_CASE("three branches emit t*d columns") {
  ExpandingModel m(vector_spec(10, 64), {0, 1}, 3);
  m.expand({2});
  m.expand({3});
  Eigen::MatrixXd z = m.forward_features(random_batch(5, 10, 2));
  CHECK(z.cols() == 3 * 64);
  CHECK(m.feature_cols() == 192);
}

TEST_CASE("warm-started branch equals its parent exactly") {
  ExpandingModel m(vector_spec(6, 12), {0, 1}, 7);
  m.expand({2});  // warm start copies branch 1
  Eigen::MatrixXd x = random_batch(4, 6, 3);
  Eigen::MatrixXd z = m.forward_features(x);
  CHECK((z.leftCols(12) - z.rightCols(12)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("input width mismatch raises a shape error") {
  ExpandingModel m(vector_spec(10, 8), {0}, 1);
  CHECK_THROWS_WITH_AS(static_cast<void>(m.forward_features(random_batch(2, 9, 1))),
                       doctest::Contains("shape"), Error);
}

TEST_CASE("cosine softmax: identical rows give the uniform distribution") {
  Eigen::MatrixXd w(4, 6);
  for (int i = 0; i < 4; ++i) w.row(i) = Eigen::RowVectorXd::LinSpaced(6, 0.5, 2.0);
  Eigen::VectorXd z = Eigen::VectorXd::Random(6);
  Eigen::VectorXd p = cosine_softmax(z, w, 2.3);
  for (int i = 0; i < 4; ++i) CHECK(p(i) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("cosine softmax: eta = 0 is uniform regardless of similarity") {
  Eigen::MatrixXd w = Eigen::MatrixXd::Random(5, 4);
  Eigen::VectorXd z = Eigen::VectorXd::Random(4);
  Eigen::VectorXd p = cosine_softmax(z, w, 0.0);
  for (int i = 0; i < 5; ++i) CHECK(p(i) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("cosine softmax: two-class hand value") {
  // cosines 0.8 and 0.2 against z = e1
  Eigen::VectorXd z(2);
  z << 1.0, 0.0;
  Eigen::MatrixXd w(2, 2);
  w << 0.8, std::sqrt(1 - 0.64), 0.2, std::sqrt(1 - 0.04);
  Eigen::VectorXd p = cosine_softmax(z, w, 2.0);
  CHECK(p(0) == doctest::Approx(0.7685247834990175).epsilon(1e-12));
}

TEST_CASE("class_probabilities normalizes and rejects degenerate input") {
  ExpandingModel m(vector_spec(6, 8), {0, 1, 2}, 5);
  Eigen::VectorXd z = Eigen::VectorXd::Random(8);
  Eigen::VectorXd p = m.class_probabilities(z);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));
  for (int i = 0; i < p.size(); ++i) {
    CHECK(p(i) > 0.0);
    CHECK(p(i) < 1.0);
  }
  CHECK_THROWS_AS(static_cast<void>(m.class_probabilities(Eigen::VectorXd::Zero(8))),
                  Error);
  // zero-norm classifier row
  param_named(m, "cls.r0.c0")->value.row(1).setZero();
  CHECK_THROWS_AS(static_cast<void>(m.class_probabilities(z)), Error);
}

TEST_CASE("probabilities sum to one over many random inputs") {
  ExpandingModel m(vector_spec(8, 8), {0, 1, 2, 3}, 11);
  m.expand({4});
  std::mt19937_64 rng(17);
  std::normal_distribution<double> dist(0.0, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd z(m.feature_cols());
    for (int i = 0; i < z.size(); ++i) z(i) = dist(rng);
    if (z.norm() == 0.0) continue;
    CHECK(std::abs(m.class_probabilities(z).sum() - 1.0) <= 1e-6);
    Eigen::VectorXd h(m.feature_dim());
    for (int i = 0; i < h.size(); ++i) h(i) = dist(rng);
    if (h.norm() == 0.0) continue;
    CHECK(std::abs(m.aux_probabilities(h).sum() - 1.0) <= 1e-6);
  }
}

TEST_CASE("class_probabilities is invariant to positive rescaling of z") {
  ExpandingModel m(vector_spec(8, 8), {0, 1, 2}, 13);
  Eigen::VectorXd z = Eigen::VectorXd::Random(8);
  Eigen::VectorXd p1 = m.class_probabilities(z);
  Eigen::VectorXd p2 = m.class_probabilities(417.0 * z);
  CHECK((p1 - p2).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("argmax is invariant to the positive temperature") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd w(6, 5);
    Eigen::VectorXd z(5);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 5; ++j) w(i, j) = dist(rng);
    for (int j = 0; j < 5; ++j) z(j) = dist(rng);
    Eigen::Index ref;
    cosine_softmax(z, w, 1.0).maxCoeff(&ref);
    for (double eta : {0.1, 2.0, 7.0, 40.0}) {
      Eigen::Index got;
      cosine_softmax(z, w, eta).maxCoeff(&got);
      CHECK(got == ref);
    }
  }
}

TEST_CASE("aux probabilities: equal block rows give uniform") {
  ExpandingModel m(vector_spec(4, 3), {0, 1}, 31);
  m.expand({2});
  for (int r = 0; r < 2; ++r) {
    auto* p = param_named(m, "cls.r" + std::to_string(r) + ".c1");
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      p->value.row(i) = Eigen::RowVector3d(0.3, -0.2, 0.9);
  }
  Eigen::VectorXd h = Eigen::VectorXd::Random(3);
  Eigen::VectorXd p = m.aux_probabilities(h);
  for (int i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("aux probabilities: two-class hand value and U_t-only dependence") {
  // d = 1 so cosine is the sign: sims (1, -1)
  ModelSpec spec = vector_spec(4, 1);
  ExpandingModel m(spec, {0}, 41);
  m.expand({1});
  param_named(m, "cls.r0.c1")->value(0, 0) = 2.5;   // positive -> cos = 1
  param_named(m, "cls.r1.c1")->value(0, 0) = -0.7;  // negative -> cos = -1
  Eigen::VectorXd h(1);
  h << 3.0;
  Eigen::VectorXd p = m.aux_probabilities(h);
  CHECK(p(0) == doctest::Approx(0.8807970779778823).epsilon(1e-12));

  // perturbing W_{t-1} and V_t blocks must not change the result
  param_named(m, "cls.r0.c0")->value.array() += 3.21;
  param_named(m, "cls.r1.c0")->value.array() -= 1.77;
  Eigen::VectorXd p2 = m.aux_probabilities(h);
  CHECK(memcmp(p.data(), p2.data(), sizeof(double) * p.size()) == 0);
}

TEST_CASE("aux probabilities require step >= 2") {
  ExpandingModel m(vector_spec(4, 3), {0, 1}, 2);
  CHECK_THROWS_WITH_AS(static_cast<void>(m.aux_probabilities(Eigen::VectorXd::Ones(3))),
                       doctest::Contains("illegal_state"), Error);
}

TEST_CASE("expand grows the classifier block-wise") {
  ExpandingModel m(vector_spec(10, 64), {0, 1, 2}, 9);
  m.expand({3, 4});  // now t = 2 with 5 classes
  m.expand({5, 6});  // t = 3, 7 classes
  Eigen::MatrixXd w = m.weight_matrix();
  CHECK(w.rows() == 7);
  CHECK(w.cols() == 192);
  // V_3: new rows x old columns
  auto* v0 = param_named(m, "cls.r2.c0");
  auto* v1 = param_named(m, "cls.r2.c1");
  REQUIRE(v0 != nullptr);
  REQUIRE(v1 != nullptr);
  CHECK(v0->value.rows() == 2);
  CHECK(v0->value.cols() == 64);
  CHECK(v1->value.cols() == 64);
  // U_3: all rows x new d columns
  Eigen::MatrixXd u = m.newest_col_block();
  CHECK(u.rows() == 7);
  CHECK(u.cols() == 64);
}

TEST_CASE("expand rejects empty and overlapping class sets") {
  ExpandingModel m(vector_spec(6, 4), {0, 1}, 10);
  CHECK_THROWS_AS(m.expand({}), Error);
  CHECK_THROWS_WITH_AS(m.expand({1, 2}), doctest::Contains("stream_contract"), Error);
}

TEST_CASE("expand preserves pre-existing values bit-exactly and freezes them") {
  ExpandingModel m(vector_spec(6, 4), {0, 1, 2}, 12);
  m.expand({3});
  std::string before = iclkit::serialize_values(m.legacy_params());
  std::map<std::string, Eigen::MatrixXd> saved;
  for (const auto* p : m.legacy_params()) saved[p->name] = p->value;
  m.set_phase(Phase::old_classes);
  m.set_phase(Phase::new_classes);
  CHECK(iclkit::serialize_values(m.legacy_params()) == before);
  for (const auto* p : m.legacy_params()) {
    CHECK_FALSE(p->trainable);
    CHECK(memcmp(saved[p->name].data(), p->value.data(),
                 sizeof(double) * p->value.size()) == 0);
  }
}

TEST_CASE("set_phase is illegal at step 1 and idempotent afterwards") {
  ExpandingModel m(vector_spec(6, 4), {0, 1}, 20);
  CHECK_THROWS_WITH_AS(m.set_phase(Phase::old_classes),
                       doctest::Contains("illegal_state"), Error);
  m.expand({2});

  auto trainable_names = [&] {
    std::vector<std::string> names;
    for (auto* p : m.trainable_params()) names.push_back(p->name);
    return names;
  };
  m.set_phase(Phase::new_classes);
  auto first = trainable_names();
  m.set_phase(Phase::old_classes);
  auto old_set = trainable_names();
  m.set_phase(Phase::new_classes);
  CHECK(trainable_names() == first);

  // OLD phase: only V_t and rho are trainable
  for (const auto& name : old_set)
    CHECK((name == "cls.rho" || name == "cls.r1.c0"));
  // NEW phase additionally trains the new branch and U_t
  bool has_branch = false, has_u = false;
  for (const auto& name : first) {
    if (name.rfind("h2.", 0) == 0) has_branch = true;
    if (name == "cls.r0.c1" || name == "cls.r1.c1") has_u = true;
  }
  CHECK(has_branch);
  CHECK(has_u);
}

TEST_CASE("low-level extractor gets no gradient in either phase") {
  ModelSpec spec = vector_spec(4, 3, {5});
  ExpandingModel m(spec, {0, 1}, 5);
  iclkit::Snapshot snap = m.snapshot_for_distillation();
  m.expand({2});
  iclkit::Batch batch;
  batch.x = random_batch(4, 4, 9);
  batch.labels = {0, 1, 2, 2};
  batch.is_memory = {1, 1, 0, 0};
  iclkit::ClassCounts counts;
  counts.add(0, 2);
  counts.add(1, 2);
  counts.add(2, 2);
  iclkit::LossConfig cfg = fixtures::tiny_loss_config();
  for (Phase phase : {Phase::new_classes, Phase::old_classes}) {
    m.set_phase(phase);
    for (auto* p : m.all_params()) p->zero_grad();
    iclkit::ad::Tape t;
    auto root = phase == Phase::new_classes
                    ? composite_new_node(t, m, &snap, batch, counts, cfg)
                    : composite_old_node(t, m, &snap, batch, counts, cfg);
    t.backward(root);
    auto* low_w = param_named(m, "low.0.W");
    REQUIRE(low_w != nullptr);
    CHECK(low_w->grad.norm() == 0.0);
  }
}

TEST_CASE("snapshots are immutable and isolated from the live model") {
  ExpandingModel m(vector_spec(6, 4), {0, 1, 2}, 30);
  iclkit::Snapshot snap = m.snapshot_for_distillation();
  Eigen::MatrixXd x = random_batch(3, 6, 4);
  Eigen::MatrixXd p1 = snap.class_probability_matrix(x);
  Eigen::MatrixXd p2 = snap.class_probability_matrix(x);
  CHECK(memcmp(p1.data(), p2.data(), sizeof(double) * p1.size()) == 0);

  // mutate the live model, snapshot output must not move
  for (auto* p : m.all_params()) p->value.array() += 0.5;
  Eigen::MatrixXd p3 = snap.class_probability_matrix(x);
  CHECK(memcmp(p1.data(), p3.data(), sizeof(double) * p1.size()) == 0);

  CHECK(p1.cols() == 3);
  for (int b = 0; b < 3; ++b) CHECK(p1.row(b).sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("row-only expansion adds rows but no branch") {
  ExpandingModel m(vector_spec(6, 4), {0, 1}, 33);
  m.expand_rows_only({2, 3}, true);
  CHECK(m.num_branches() == 1);
  CHECK(m.num_classes() == 4);
  CHECK(m.weight_matrix().rows() == 4);
  CHECK(m.weight_matrix().cols() == 4);
  CHECK_FALSE(m.expanded_this_step());
  // both phases train the same set: new rows + rho
  m.set_phase(Phase::old_classes);
  for (auto* p : m.trainable_params())
    CHECK((p->name == "cls.rho" || p->name.rfind("cls.r1.", 0) == 0));
}
