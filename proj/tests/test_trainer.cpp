#include <doctest.h>

#include <map>
#include <filesystem>
#include <set>

#include "iclkit/checkpoint.hpp"
#include "iclkit/trainer.hpp"
#include "support/fixtures.hpp"

using iclkit::AblationVariant;
using iclkit::Alternation;
using iclkit::Error;
using iclkit::ExpandingModel;
using iclkit::LearnerKind;
using iclkit::LearnerSpec;
using iclkit::Phase;
using iclkit::RunResult;
using iclkit::StepCallbacks;
using iclkit::Trainer;
using iclkit::TrainPlan;

namespace {

TrainPlan quick_plan(int initial, int incremental, std::uint64_t seed) {
  TrainPlan plan;
  plan.epochs_initial = initial;
  plan.epochs_incremental = incremental;
  plan.batch_size = 16;
  plan.optimizer.learning_rate = 0.05;
  plan.optimizer.lr_final = 1e-3;
  plan.loss.top_k = 1;
  plan.seed = seed;
  return plan;
}

iclkit::IncrementalStream toy_stream(std::uint64_t class_order_seed) {
  iclkit::Dataset data = fixtures::make_blobs(6, 40, 8, 12);
  return iclkit::make_stream(data, 4, 1, class_order_seed);
}

double train_accuracy(const ExpandingModel& model, const iclkit::StepData& step) {
  Eigen::MatrixXd x(step.train.size(), step.train[0].x.size());
  for (std::size_t i = 0; i < step.train.size(); ++i) x.row(i) = step.train[i].x.transpose();
  auto pred = model.predict(x);
  int hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == step.train[i].label) ++hits;
  return static_cast<double>(hits) / pred.size();
}

}  // namespace

TEST_CASE("initial training fits separable blobs") {
  iclkit::IncrementalStream stream = toy_stream(3);
  iclkit::ModelSpec spec = fixtures::small_model_spec(8);
  spec.input = stream.input;
  ExpandingModel model(spec, stream.steps[0].classes, 99);
  Trainer trainer(quick_plan(25, 10, 5), LearnerSpec{});
  auto logs = trainer.train_initial(model, stream.steps[0], stream.input);

  CHECK(train_accuracy(model, stream.steps[0]) >= 0.95);
  REQUIRE(logs.size() == 25);
  for (const auto& log : logs) CHECK(std::isfinite(log.loss.total));
  // epoch-mean loss does not increase over the first three epochs
  CHECK(logs[1].loss.total <= logs[0].loss.total + 1e-9);
  CHECK(logs[2].loss.total <= logs[1].loss.total + 1e-9);
}

TEST_CASE("plan invariants are enforced") {
  TrainPlan plan = quick_plan(0, 5, 1);
  CHECK_THROWS_AS(Trainer(plan, LearnerSpec{}), Error);
  plan = quick_plan(5, 5, 1);
  plan.batch_size = 0;
  CHECK_THROWS_AS(Trainer(plan, LearnerSpec{}), Error);
  plan = quick_plan(5, 5, 1);
  plan.optimizer.learning_rate = 0.0;
  CHECK_THROWS_AS(Trainer(plan, LearnerSpec{}), Error);
}

TEST_CASE("full incremental run honors the freezing contract") {
  iclkit::IncrementalStream stream = toy_stream(5);
  Trainer trainer(quick_plan(8, 6, 7), LearnerSpec{LearnerKind::proposed,
                                                   AblationVariant::full, 10});

  std::map<std::string, std::string> prev_values;
  std::map<std::string, std::string> before_old_pass;
  int old_pass_checks = 0;
  StepCallbacks callbacks;
  callbacks.after_step = [&](const ExpandingModel& model, int step) {
    if (step >= 2) {
      for (const auto* p : model.legacy_params()) {
        REQUIRE(prev_values.count(p->name));
        CHECK(iclkit::serialize_values({p}) == prev_values[p->name]);
      }
    }
    prev_values.clear();
    for (const auto* p : model.all_params())
      prev_values[p->name] = iclkit::serialize_values({p});
  };
  callbacks.after_phase = [&](const ExpandingModel& model, int step, int, Phase phase) {
    if (step < 2) return;
    if (phase == Phase::new_classes) {
      before_old_pass.clear();
      for (const auto* p : model.old_phase_frozen_params())
        before_old_pass[p->name] = iclkit::serialize_values({p});
    } else {
      for (const auto* p : model.old_phase_frozen_params()) {
        REQUIRE(before_old_pass.count(p->name));
        CHECK(iclkit::serialize_values({p}) == before_old_pass[p->name]);
        ++old_pass_checks;
      }
    }
  };

  iclkit::ModelSpec spec = fixtures::small_model_spec(8);
  RunResult result = trainer.run(stream, spec, callbacks);
  CHECK(old_pass_checks > 0);
  CHECK(result.matrix.complete());
  CHECK(result.matrix.steps() == 3);
}

TEST_CASE("epoch accounting: N pair-iterations per incremental step") {
  iclkit::IncrementalStream stream = toy_stream(6);
  const int n = 5;
  for (Alternation alt : {Alternation::per_epoch, Alternation::per_batch}) {
    TrainPlan plan = quick_plan(4, n, 8);
    plan.alternation = alt;
    Trainer trainer(plan, LearnerSpec{LearnerKind::proposed, AblationVariant::full, 10});
    RunResult result = trainer.run(stream, fixtures::small_model_spec(8));

    std::map<int, std::map<Phase, int>> passes;  // step -> phase -> count
    for (const auto& log : result.epoch_logs) passes[log.step][log.phase] += 1;
    CHECK(passes[1][Phase::new_classes] == 4);  // initial epochs
    for (int t = 2; t <= 3; ++t) {
      CHECK(passes[t][Phase::new_classes] == n);
      CHECK(passes[t][Phase::old_classes] == n);
    }
  }
}

TEST_CASE("no_old_objective drops every OLD pass") {
  iclkit::IncrementalStream stream = toy_stream(7);
  Trainer trainer(quick_plan(4, 5, 9),
                  LearnerSpec{LearnerKind::proposed, AblationVariant::no_old_objective, 10});
  RunResult result = trainer.run(stream, fixtures::small_model_spec(8));
  for (const auto& log : result.epoch_logs) CHECK(log.phase == Phase::new_classes);
}

TEST_CASE("runs are deterministic in the seed") {
  iclkit::IncrementalStream stream = toy_stream(11);
  TrainPlan plan = quick_plan(6, 5, 21);
  Trainer a(plan, LearnerSpec{});
  Trainer b(plan, LearnerSpec{});
  RunResult ra = a.run(stream, fixtures::small_model_spec(8));
  RunResult rb = b.run(stream, fixtures::small_model_spec(8));
  CHECK(ra.matrix.to_csv() == rb.matrix.to_csv());

  TrainPlan other = plan;
  other.seed = 22;
  Trainer c(other, LearnerSpec{});
  RunResult rc = c.run(stream, fixtures::small_model_spec(8));
  CHECK(ra.matrix.to_csv() != rc.matrix.to_csv());
}

TEST_CASE("zero-weight composites degenerate to plain classification and complete") {
  iclkit::IncrementalStream stream = toy_stream(13);
  TrainPlan plan = quick_plan(4, 4, 31);
  plan.loss.lambda1 = plan.loss.lambda2 = plan.loss.lambda3 = 0.0;
  plan.loss.lambda4 = plan.loss.lambda5 = 0.0;
  Trainer trainer(plan, LearnerSpec{LearnerKind::proposed, AblationVariant::full, 10});
  RunResult result = trainer.run(stream, fixtures::small_model_spec(8));
  CHECK(result.matrix.complete());
  for (const auto& log : result.epoch_logs) {
    CHECK(log.loss.l_aux == 0.0);
    CHECK(log.loss.l_dist == 0.0);
    CHECK(log.loss.l_marg == 0.0);
  }
}

TEST_CASE("reference learners run without expansion") {
  iclkit::IncrementalStream stream = toy_stream(17);
  for (LearnerKind kind : {LearnerKind::finetune_only, LearnerKind::replay_only}) {
    Trainer trainer(quick_plan(4, 4, 33), LearnerSpec{kind, AblationVariant::full, 10});
    int final_branches = 0;
    StepCallbacks callbacks;
    callbacks.after_step = [&](const ExpandingModel& model, int) {
      final_branches = model.num_branches();
    };
    RunResult result = trainer.run(stream, fixtures::small_model_spec(8), callbacks);
    CHECK(result.matrix.complete());
    CHECK(final_branches == 1);
    // naive learners never run an OLD pass
    for (const auto& log : result.epoch_logs) CHECK(log.phase == Phase::new_classes);
  }
}

TEST_CASE("memory stays within budget and only holds old classes") {
  iclkit::IncrementalStream stream = toy_stream(19);
  Trainer trainer(quick_plan(4, 4, 35),
                  LearnerSpec{LearnerKind::proposed, AblationVariant::full, 7});
  StepCallbacks callbacks;
  callbacks.after_memory = [&](const iclkit::ExemplarMemory& memory, int step) {
    std::set<int> allowed;
    for (int t = 0; t < step - 1; ++t)
      for (int c : stream.steps[t].classes) allowed.insert(c);
    CHECK(memory.total_size() <= 7 * static_cast<int>(allowed.size()));
    for (int label : memory.stored_classes()) {
      CHECK(allowed.count(label));
      CHECK(memory.exemplars(label).size() <= 7);
    }
  };
  trainer.run(stream, fixtures::small_model_spec(8), callbacks);
}

TEST_CASE("divergent training reports phase and epoch") {
  iclkit::IncrementalStream stream = toy_stream(23);
  TrainPlan plan = quick_plan(3, 3, 41);
  plan.optimizer.learning_rate = 1e18;
  plan.optimizer.lr_final = 1e18;
  Trainer trainer(plan, LearnerSpec{});
  try {
    trainer.run(stream, fixtures::small_model_spec(8));
    FAIL("expected a divergence error");
  } catch (const Error& e) {
    CHECK(e.kind() == iclkit::ErrorKind::divergence);
    CHECK(std::string(e.what()).find("phase") != std::string::npos);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("run_ablation emits the three report metrics") {
  iclkit::IncrementalStream stream = toy_stream(29);
  auto report = iclkit::run_ablation(AblationVariant::no_expansion, stream,
                                     fixtures::small_model_spec(8), quick_plan(4, 4, 43), 10);
  CHECK(report.acc >= 0.0);
  CHECK(report.acc <= 1.0);
  CHECK(report.acc_new >= 0.0);
  CHECK(report.acc_old >= 0.0);
  CHECK(std::isfinite(report.fgt));
}

TEST_CASE("unknown learner and variant names are usage errors") {
  CHECK_THROWS_AS(static_cast<void>(iclkit::learner_from_string("bogus")), Error);
  CHECK_THROWS_AS(static_cast<void>(iclkit::variant_from_string("bogus")), Error);
}

TEST_CASE("an image stream trains end to end through the conv backbone") {
  iclkit::SkewSpec spec;
  spec.proportions = {0.3, 0.3, 0.2, 0.2};
  spec.total_samples = 120;
  spec.image_mode = true;
  spec.image_shape = {1, 8, 8};
  spec.min_per_class = 12;
  iclkit::Dataset data = iclkit::generate_skewed(spec, 5);
  iclkit::IncrementalStream stream = iclkit::make_stream(data, 2, 1, 3);

  iclkit::ModelSpec mspec;
  mspec.conv_channels = {4, 6};
  mspec.split_index = 1;
  mspec.feature_dim = 6;

  TrainPlan plan = quick_plan(3, 2, 51);
  plan.batch_size = 8;
  Trainer trainer(plan, LearnerSpec{LearnerKind::proposed, AblationVariant::full, 5});
  RunResult result = trainer.run(stream, mspec);
  CHECK(result.matrix.complete());
  CHECK(result.matrix.steps() == 3);
  for (const auto& log : result.epoch_logs) CHECK(std::isfinite(log.loss.total));
}

TEST_CASE("initial weights can be seeded from a stored checkpoint") {
  namespace fs = std::filesystem;
  iclkit::IncrementalStream stream = toy_stream(31);
  iclkit::ModelSpec spec = fixtures::small_model_spec(8);
  spec.input = stream.input;
  ExpandingModel donor(spec, stream.steps[0].classes, 123);
  fs::path file = fs::temp_directory_path() / "iclkit_init_weights.bin";
  iclkit::save_checkpoint(donor, file.string());

  iclkit::ModelSpec warm = spec;
  warm.init_weights_file = file.string();
  TrainPlan plan = quick_plan(1, 1, 77);
  Trainer trainer(plan, LearnerSpec{});
  RunResult seeded = trainer.run(stream, warm);

  // same plan without the warm start diverges from the seeded run
  Trainer cold_trainer(plan, LearnerSpec{});
  RunResult cold = cold_trainer.run(stream, spec);
  CHECK(seeded.matrix.to_csv() != cold.matrix.to_csv());

  // applying weights copies matching parameters bit-exactly
  ExpandingModel fresh(spec, stream.steps[0].classes, 9);
  int copied = iclkit::apply_initial_weights(fresh, file.string());
  CHECK(copied > 0);
  const ExpandingModel& cdonor = donor;
  const ExpandingModel& cfresh = fresh;
  CHECK(iclkit::serialize_values(cfresh.all_params()) ==
        iclkit::serialize_values(cdonor.all_params()));
  fs::remove(file);
}
