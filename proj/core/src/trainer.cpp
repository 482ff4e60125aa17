#include "iclkit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "iclkit/checkpoint.hpp"

namespace iclkit {

void TrainPlan::validate() const {
  require(epochs_initial >= 1 && epochs_incremental >= 1, ErrorKind::config,
          "epoch counts must be >= 1");
  require(batch_size >= 1, ErrorKind::config, "batch_size must be >= 1");
  require(optimizer.learning_rate > 0, ErrorKind::config, "learning rate must be > 0");
  require(optimizer.lr_final >= 0 && optimizer.lr_final <= optimizer.learning_rate,
          ErrorKind::config, "lr_final must be in [0, learning_rate]");
  require(optimizer.momentum >= 0 && optimizer.momentum < 1, ErrorKind::config,
          "momentum must be in [0,1)");
  require(optimizer.weight_decay >= 0, ErrorKind::config, "weight decay must be >= 0");
  require(optimizer.clip_norm >= 0, ErrorKind::config, "clip_norm must be >= 0");
  loss.validate();
}

LearnerKind learner_from_string(const std::string& s) {
  if (s == "proposed") return LearnerKind::proposed;
  if (s == "finetune_only") return LearnerKind::finetune_only;
  if (s == "replay_only") return LearnerKind::replay_only;
  raise(ErrorKind::usage, "unknown learner '" + s + "'");
}

std::string to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::proposed: return "proposed";
    case LearnerKind::finetune_only: return "finetune_only";
    case LearnerKind::replay_only: return "replay_only";
  }
  return "?";
}

AblationVariant variant_from_string(const std::string& s) {
  if (s == "full") return AblationVariant::full;
  if (s == "no_old_objective") return AblationVariant::no_old_objective;
  if (s == "no_aux") return AblationVariant::no_aux;
  if (s == "no_dist") return AblationVariant::no_dist;
  if (s == "no_margin") return AblationVariant::no_margin;
  if (s == "no_expansion") return AblationVariant::no_expansion;
  raise(ErrorKind::usage, "unknown ablation variant '" + s + "'");
}

std::string to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::full: return "full";
    case AblationVariant::no_old_objective: return "no_old_objective";
    case AblationVariant::no_aux: return "no_aux";
    case AblationVariant::no_dist: return "no_dist";
    case AblationVariant::no_margin: return "no_margin";
    case AblationVariant::no_expansion: return "no_expansion";
  }
  return "?";
}

LossConfig LearnerSpec::effective_loss(const LossConfig& base) const {
  LossConfig cfg = base;
  if (kind != LearnerKind::proposed) {
    // naive reference learners: classification loss only
    cfg.lambda1 = cfg.lambda2 = cfg.lambda3 = cfg.lambda4 = cfg.lambda5 = 0.0;
    return cfg;
  }
  switch (variant) {
    case AblationVariant::no_aux: cfg.lambda1 = 0.0; break;
    case AblationVariant::no_dist: cfg.lambda2 = cfg.lambda4 = 0.0; break;
    case AblationVariant::no_margin: cfg.lambda3 = cfg.lambda5 = 0.0; break;
    default: break;
  }
  return cfg;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void SgdOptimizer::step(const std::vector<ad::Parameter*>& params, double lr) {
  double scale = 1.0;
  if (spec_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto* p : params)
      if (p->trainable) sq += p->grad.squaredNorm();
    double norm = std::sqrt(sq);
    if (norm > spec_.clip_norm) scale = spec_.clip_norm / norm;
  }
  for (auto* p : params) {
    if (!p->trainable) continue;
    Eigen::MatrixXd g = scale * p->grad + spec_.weight_decay * p->value;
    auto it = velocity_.try_emplace(p->name, Eigen::MatrixXd::Zero(g.rows(), g.cols()))
                  .first;
    it->second = spec_.momentum * it->second + g;
    p->value -= lr * it->second;
  }
}

double cosine_lr(const OptimizerSpec& spec, int epoch, int total_epochs) {
  if (total_epochs <= 1) return spec.learning_rate;
  double progress = static_cast<double>(epoch - 1) / (total_epochs - 1);
  return spec.lr_final +
         0.5 * (spec.learning_rate - spec.lr_final) * (1.0 + std::cos(M_PI * progress));
}

Trainer::Trainer(TrainPlan plan, LearnerSpec learner)
    : plan_(std::move(plan)), learner_(learner) {
  plan_.validate();
  require(learner_.memory_budget >= 1, ErrorKind::config, "memory budget must be >= 1");
}

Batch Trainer::make_batch(const TrainingSet& set, const std::vector<int>& order,
                          std::size_t from, std::size_t to, RunState& state) const {
  Batch b;
  const Eigen::Index width = set.samples[0].x.size();
  b.x.resize(static_cast<Eigen::Index>(to - from), width);
  for (std::size_t i = from; i < to; ++i) {
    const StoredSample& s = set.samples[order[i]];
    Eigen::VectorXd x = plan_.augment_data ? augment(s.x, state.input, state.augment_rng)
                                           : s.x;
    b.x.row(static_cast<Eigen::Index>(i - from)) = x.transpose();
    b.labels.push_back(s.label);
    b.is_memory.push_back(set.is_memory[order[i]]);
  }
  return b;
}

namespace {

void check_finite(const LossBreakdown& loss, Phase phase, int step, int epoch) {
  if (std::isfinite(loss.total)) return;
  raise(ErrorKind::divergence,
        "non-finite loss (phase " +
            std::string(phase == Phase::new_classes ? "NEW" : "OLD") + ", step " +
            std::to_string(step) + ", epoch " + std::to_string(epoch) + ")");
}

void accumulate(LossBreakdown& into, const LossBreakdown& part) {
  into.total += part.total;
  into.l_class += part.l_class;
  into.l_aux += part.l_aux;
  into.l_dist += part.l_dist;
  into.l_marg += part.l_marg;
}

void divide(LossBreakdown& loss, int n) {
  loss.total /= n;
  loss.l_class /= n;
  loss.l_aux /= n;
  loss.l_dist /= n;
  loss.l_marg /= n;
}

std::vector<int> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace

void Trainer::epoch_pass(ExpandingModel& model, const TrainingSet& set,
                         const std::optional<Snapshot>& snapshot, const LossConfig& loss,
                         SgdOptimizer& opt, double lr, Phase phase, bool composite,
                         int step, int epoch, RunState& state) {
  if (composite) model.set_phase(phase);
  std::vector<int> order = shuffled_indices(set.samples.size(), state.shuffle_rng);
  EpochLog log{step, epoch, phase, {}, lr, 0};
  for (std::size_t at = 0; at < order.size(); at += plan_.batch_size) {
    std::size_t end = std::min(order.size(), at + plan_.batch_size);
    Batch batch = make_batch(set, order, at, end, state);
    for (auto* p : model.all_params()) p->zero_grad();
    ad::Tape tape;
    LossBreakdown part;
    ad::Tape::NodeId root;
    if (!composite) {
      root = classification_loss_node(tape, model, batch, set.counts, loss.beta_new,
                                      loss.gamma_new, &part);
    } else if (phase == Phase::new_classes) {
      root = composite_new_node(tape, model, snapshot ? &*snapshot : nullptr, batch,
                                set.counts, loss, &part);
    } else {
      root = composite_old_node(tape, model, snapshot ? &*snapshot : nullptr, batch,
                                set.counts, loss, &part);
    }
    check_finite(part, phase, step, epoch);
    tape.backward(root);
    opt.step(model.all_params(), lr);
    accumulate(log.loss, part);
    ++log.batches;
  }
  if (log.batches > 0) divide(log.loss, log.batches);
  state.logs->push_back(log);
  if (state.callbacks->on_epoch) state.callbacks->on_epoch(log);
  if (state.callbacks->after_phase) state.callbacks->after_phase(model, step, epoch, phase);
}

void Trainer::paired_batch_epoch(ExpandingModel& model, const TrainingSet& set,
                                 const std::optional<Snapshot>& snapshot,
                                 const LossConfig& loss, SgdOptimizer& opt, double lr,
                                 int step, int epoch, RunState& state) {
  std::vector<int> order = shuffled_indices(set.samples.size(), state.shuffle_rng);
  EpochLog log_new{step, epoch, Phase::new_classes, {}, lr, 0};
  EpochLog log_old{step, epoch, Phase::old_classes, {}, lr, 0};
  for (std::size_t at = 0; at < order.size(); at += plan_.batch_size) {
    std::size_t end = std::min(order.size(), at + plan_.batch_size);
    Batch batch = make_batch(set, order, at, end, state);

    model.set_phase(Phase::new_classes);
    for (auto* p : model.all_params()) p->zero_grad();
    {
      ad::Tape tape;
      LossBreakdown part;
      ad::Tape::NodeId root = composite_new_node(
          tape, model, snapshot ? &*snapshot : nullptr, batch, set.counts, loss, &part);
      check_finite(part, Phase::new_classes, step, epoch);
      tape.backward(root);
      opt.step(model.all_params(), lr);
      accumulate(log_new.loss, part);
      ++log_new.batches;
    }
    if (learner_.uses_old_phase()) {
      model.set_phase(Phase::old_classes);
      for (auto* p : model.all_params()) p->zero_grad();
      ad::Tape tape;
      LossBreakdown part;
      ad::Tape::NodeId root = composite_old_node(
          tape, model, snapshot ? &*snapshot : nullptr, batch, set.counts, loss, &part);
      check_finite(part, Phase::old_classes, step, epoch);
      tape.backward(root);
      opt.step(model.all_params(), lr);
      accumulate(log_old.loss, part);
      ++log_old.batches;
    }
  }
  if (log_new.batches > 0) divide(log_new.loss, log_new.batches);
  state.logs->push_back(log_new);
  if (state.callbacks->on_epoch) state.callbacks->on_epoch(log_new);
  if (state.callbacks->after_phase)
    state.callbacks->after_phase(model, step, epoch, Phase::new_classes);
  if (log_old.batches > 0) {
    divide(log_old.loss, log_old.batches);
    state.logs->push_back(log_old);
    if (state.callbacks->on_epoch) state.callbacks->on_epoch(log_old);
    if (state.callbacks->after_phase)
      state.callbacks->after_phase(model, step, epoch, Phase::old_classes);
  }
}

void Trainer::initial_epochs(ExpandingModel& model, const StepData& d1, RunState& state) {
  require(model.step_index() == 1, ErrorKind::contract,
          "initial training requires a step-1 model");
  require(!d1.train.empty(), ErrorKind::contract, "D_1 is empty");
  TrainingSet set;
  for (const auto& s : d1.train) {
    set.samples.push_back(s);
    set.is_memory.push_back(0);
    set.counts.add(s.label);
  }
  SgdOptimizer opt(plan_.optimizer);
  LossConfig loss = learner_.effective_loss(plan_.loss);
  for (int epoch = 1; epoch <= plan_.epochs_initial; ++epoch)
    epoch_pass(model, set, std::nullopt, loss, opt,
               cosine_lr(plan_.optimizer, epoch, plan_.epochs_initial),
               Phase::new_classes, false, 1, epoch, state);
}

std::vector<EpochLog> Trainer::train_initial(ExpandingModel& model, const StepData& d1,
                                             const nn::InputSig& input) {
  RunState state;
  state.shuffle_rng.seed(mix_seed(plan_.seed, 2));
  state.augment_rng.seed(mix_seed(plan_.seed, 3));
  std::vector<EpochLog> logs;
  StepCallbacks none;
  state.logs = &logs;
  state.callbacks = &none;
  state.input = input;
  initial_epochs(model, d1, state);
  return logs;
}

void Trainer::train_incremental_step(ExpandingModel& model, const StepData& dt,
                                     const ExemplarMemory& memory,
                                     const std::optional<Snapshot>& snapshot,
                                     RunState& state) {
  const int step = model.step_index();
  TrainingSet set;
  if (learner_.uses_memory()) {
    set = build_training_set(memory, dt.train);
  } else {
    for (const auto& s : dt.train) {
      set.samples.push_back(s);
      set.is_memory.push_back(0);
      set.counts.add(s.label);
    }
  }
  SgdOptimizer opt(plan_.optimizer);
  LossConfig loss = learner_.effective_loss(plan_.loss);
  const int n = plan_.epochs_incremental;
  for (int epoch = 1; epoch <= n; ++epoch) {
    double lr = cosine_lr(plan_.optimizer, epoch, n);
    if (!learner_.uses_composites()) {
      epoch_pass(model, set, std::nullopt, loss, opt, lr, Phase::new_classes, false,
                 step, epoch, state);
    } else if (plan_.alternation == Alternation::per_epoch) {
      epoch_pass(model, set, snapshot, loss, opt, lr, Phase::new_classes, true, step,
                 epoch, state);
      if (learner_.uses_old_phase())
        epoch_pass(model, set, snapshot, loss, opt, lr, Phase::old_classes, true, step,
                   epoch, state);
    } else {
      paired_batch_epoch(model, set, snapshot, loss, opt, lr, step, epoch, state);
    }
  }
}

RunResult Trainer::run(const IncrementalStream& stream, const ModelSpec& model_spec,
                       const StepCallbacks& callbacks) {
  require(!stream.steps.empty(), ErrorKind::contract, "stream has no steps");
  ModelSpec spec = model_spec;
  spec.input = stream.input;

  RunResult result;
  RunState state;
  state.shuffle_rng.seed(mix_seed(plan_.seed, 2));
  state.augment_rng.seed(mix_seed(plan_.seed, 3));
  state.logs = &result.epoch_logs;
  state.callbacks = &callbacks;
  state.input = stream.input;

  ExpandingModel model(spec, stream.steps[0].classes, mix_seed(plan_.seed, 1));
  if (!spec.init_weights_file.empty())
    apply_initial_weights(model, spec.init_weights_file);
  initial_epochs(model, stream.steps[0], state);
  record(result.matrix, model, stream);
  if (callbacks.after_step) callbacks.after_step(model, 1);

  ExemplarMemory memory(learner_.memory_budget);
  const StepData* prev = &stream.steps[0];

  for (int t = 2; t <= stream.total_steps(); ++t) {
    const StepData& dt = stream.steps[t - 1];
    LossConfig loss = learner_.effective_loss(plan_.loss);
    bool needs_snapshot =
        learner_.uses_memory() ||
        (learner_.uses_composites() && (loss.lambda2 > 0 || loss.lambda4 > 0));
    std::optional<Snapshot> snapshot;
    if (needs_snapshot) snapshot.emplace(model.snapshot_for_distillation());

    // growth happens before memory construction, per the training procedure;
    // herding still runs in the (frozen) previous-step feature space
    if (learner_.uses_expansion()) {
      model.expand(dt.classes);
    } else {
      // the no-expansion ablation keeps its single extractor in the H_t role
      model.expand_rows_only(dt.classes, learner_.uses_freezing(),
                             /*retrain_newest_branch=*/learner_.uses_freezing());
    }

    if (learner_.uses_memory()) {
      std::vector<CandidatePool> pools;
      for (int label : memory.stored_classes())
        pools.push_back(CandidatePool{label, memory.exemplars(label)});
      for (int label : prev->classes) {
        CandidatePool pool{label, {}};
        for (const auto& s : prev->train)
          if (s.label == label) pool.samples.push_back(s);
        pools.push_back(std::move(pool));
      }
      memory = rebuild_memory(*snapshot, pools, learner_.memory_budget);
      if (callbacks.after_memory) callbacks.after_memory(memory, t);
    }

    train_incremental_step(model, dt, memory, snapshot, state);
    record(result.matrix, model, stream);
    if (callbacks.after_step) callbacks.after_step(model, t);
    prev = &dt;
  }
  return result;
}

AblationReport run_ablation(AblationVariant variant, const IncrementalStream& stream,
                            const ModelSpec& model_spec, const TrainPlan& plan,
                            int memory_budget) {
  Trainer trainer(plan, LearnerSpec{LearnerKind::proposed, variant, memory_budget});
  RunResult result = trainer.run(stream, model_spec);
  AblationReport report;
  report.variant = variant;
  report.acc = overall_acc(result.matrix);
  report.fgt = forgetting(result.matrix);
  auto [anew, aold] = acc_new_old(result.matrix);
  report.acc_new = anew;
  report.acc_old = aold;
  return report;
}

}  // namespace iclkit
