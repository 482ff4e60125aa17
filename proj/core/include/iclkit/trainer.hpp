#pragma once

#include <functional>
#include <optional>

#include "iclkit/data.hpp"
#include "iclkit/losses.hpp"
#include "iclkit/memory.hpp"
#include "iclkit/metrics.hpp"

namespace iclkit {

enum class Alternation { per_epoch, per_batch };

struct OptimizerSpec {
  double learning_rate = 0.1;
  double lr_final = 1e-4;  // cosine-decay floor
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double clip_norm = 0.0;  // 0 disables clipping
};

struct TrainPlan {
  int epochs_initial = 30;
  int epochs_incremental = 20;
  int batch_size = 32;
  OptimizerSpec optimizer;
  LossConfig loss;
  std::uint64_t seed = 1;
  Alternation alternation = Alternation::per_epoch;
  bool augment_data = true;

  void validate() const;
};

enum class LearnerKind { proposed, finetune_only, replay_only };
enum class AblationVariant { full, no_old_objective, no_aux, no_dist, no_margin, no_expansion };

LearnerKind learner_from_string(const std::string& s);
std::string to_string(LearnerKind k);
AblationVariant variant_from_string(const std::string& s);
std::string to_string(AblationVariant v);

struct LearnerSpec {
  LearnerKind kind = LearnerKind::proposed;
  AblationVariant variant = AblationVariant::full;
  int memory_budget = 20;

  bool uses_memory() const {
    return kind == LearnerKind::proposed || kind == LearnerKind::replay_only;
  }
  bool uses_expansion() const {
    return kind == LearnerKind::proposed && variant != AblationVariant::no_expansion;
  }
  bool uses_old_phase() const {
    return kind == LearnerKind::proposed && variant != AblationVariant::no_old_objective;
  }
  bool uses_composites() const { return kind == LearnerKind::proposed; }
  bool uses_freezing() const { return kind == LearnerKind::proposed; }
  // Zeroes out the lesioned loss weights.
  LossConfig effective_loss(const LossConfig& base) const;
};

struct EpochLog {
  int step = 0;
  int epoch = 0;
  Phase phase = Phase::new_classes;
  LossBreakdown loss;  // mean over the epoch's batches
  double lr = 0.0;
  int batches = 0;
};

struct RunResult {
  AccuracyMatrix matrix;
  std::vector<EpochLog> epoch_logs;
};

struct StepCallbacks {
  std::function<void(const ExpandingModel&, int step)> after_step;
  std::function<void(const ExemplarMemory&, int step)> after_memory;
  std::function<void(const EpochLog&)> on_epoch;
  // fires after every optimization pass (one phase of one epoch)
  std::function<void(const ExpandingModel&, int step, int epoch, Phase phase)> after_phase;
};

// Momentum SGD over trainable parameters, velocity keyed by parameter name.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(OptimizerSpec spec) : spec_(spec) {}
  void step(const std::vector<ad::Parameter*>& params, double lr);
  void reset() { velocity_.clear(); }

 private:
  OptimizerSpec spec_;
  std::map<std::string, Eigen::MatrixXd> velocity_;
};

double cosine_lr(const OptimizerSpec& spec, int epoch, int total_epochs);

// Runs the full training procedure over a stream: initial training on D_1,
// then per step expand / rebuild memory / alternate the two objectives.
class Trainer {
 public:
  Trainer(TrainPlan plan, LearnerSpec learner);

  RunResult run(const IncrementalStream& stream, const ModelSpec& model_spec,
                const StepCallbacks& callbacks = {});

  // Step-1 training: classification loss only. Returns the per-epoch logs.
  std::vector<EpochLog> train_initial(ExpandingModel& model, const StepData& d1,
                                      const nn::InputSig& input);

  const TrainPlan& plan() const { return plan_; }
  const LearnerSpec& learner() const { return learner_; }

 private:
  struct RunState {
    std::mt19937_64 shuffle_rng;
    std::mt19937_64 augment_rng;
    std::vector<EpochLog>* logs = nullptr;
    const StepCallbacks* callbacks = nullptr;
    nn::InputSig input;
  };

  void initial_epochs(ExpandingModel& model, const StepData& d1, RunState& state);
  void train_incremental_step(ExpandingModel& model, const StepData& dt,
                              const ExemplarMemory& memory,
                              const std::optional<Snapshot>& snapshot, RunState& state);
  void epoch_pass(ExpandingModel& model, const TrainingSet& set,
                  const std::optional<Snapshot>& snapshot, const LossConfig& loss,
                  SgdOptimizer& opt, double lr, Phase phase, bool composite, int step,
                  int epoch, RunState& state);
  void paired_batch_epoch(ExpandingModel& model, const TrainingSet& set,
                          const std::optional<Snapshot>& snapshot, const LossConfig& loss,
                          SgdOptimizer& opt, double lr, int step, int epoch,
                          RunState& state);
  Batch make_batch(const TrainingSet& set, const std::vector<int>& order, std::size_t from,
                   std::size_t to, RunState& state) const;

  TrainPlan plan_;
  LearnerSpec learner_;
};

struct AblationReport {
  AblationVariant variant = AblationVariant::full;
  double acc = 0.0;
  double acc_new = 0.0;
  double acc_old = 0.0;
  double fgt = 0.0;
};

AblationReport run_ablation(AblationVariant variant, const IncrementalStream& stream,
                            const ModelSpec& model_spec, const TrainPlan& plan,
                            int memory_budget = 20);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace iclkit
