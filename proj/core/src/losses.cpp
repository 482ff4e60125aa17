#include "iclkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace iclkit {

namespace {
constexpr double kProbFloor = 1e-12;
}

void LossConfig::validate() const {
  require(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0 && lambda4 >= 0 && lambda5 >= 0,
          ErrorKind::config, "loss weights must be nonnegative");
  require(beta_new >= 0 && beta_new < 1, ErrorKind::config, "beta_new must be in [0,1)");
  require(beta_old >= 0 && beta_old < 1, ErrorKind::config, "beta_old must be in [0,1)");
  require(gamma_new >= 0 && gamma_old >= 0, ErrorKind::config, "gamma must be >= 0");
  require(margin_m >= 0, ErrorKind::config, "margin must be nonnegative");
  require(top_k >= 1, ErrorKind::config, "top_k must be >= 1");
}

void ClassCounts::add(int label, int count) {
  require(count >= 1, ErrorKind::contract, "class count increment must be >= 1");
  counts_[label] += count;
}

int ClassCounts::count(int label) const {
  auto it = counts_.find(label);
  require(it != counts_.end(), ErrorKind::contract,
          "no sample count for class " + std::to_string(label));
  return it->second;
}

int ClassCounts::total() const {
  int t = 0;
  for (auto& [_, n] : counts_) t += n;
  return t;
}

double cb_weight(double beta, int n) {
  require(beta >= 0 && beta < 1, ErrorKind::contract, "beta must be in [0,1)");
  require(n >= 1, ErrorKind::contract, "class count must be >= 1");
  if (beta == 0.0) return 1.0;
  return (1.0 - beta) / (1.0 - std::pow(beta, n));
}

double class_balanced_focal(const Eigen::VectorXd& p_true, const std::vector<int>& labels,
                            const ClassCounts& counts, double beta, double gamma) {
  require(static_cast<Eigen::Index>(labels.size()) == p_true.size(), ErrorKind::contract,
          "one label per probability required");
  require(p_true.size() > 0, ErrorKind::contract, "empty batch");
  double acc = 0.0;
  for (Eigen::Index b = 0; b < p_true.size(); ++b) {
    double p = p_true(b);
    require(p <= 1.0 && p >= 0.0, ErrorKind::contract, "probability outside [0,1]");
    double pc = std::max(p, kProbFloor);
    acc += cb_weight(beta, counts.count(labels[b])) * std::pow(1.0 - p, gamma) *
           (-std::log(pc));
  }
  return acc / static_cast<double>(p_true.size());
}

double auxiliary_loss(const ExpandingModel& model, const Batch& batch,
                      const ClassCounts& counts, double beta, double gamma) {
  require(model.step_index() >= 2, ErrorKind::illegal_state,
          "auxiliary loss is defined from step 2 on");
  Eigen::MatrixXd h = model.newest_branch_features(batch.x);
  Eigen::MatrixXd u = model.newest_col_block();
  Eigen::VectorXd p_true(h.rows());
  for (Eigen::Index b = 0; b < h.rows(); ++b) {
    Eigen::VectorXd p = softmax_vec(cosine_similarities(h.row(b).transpose(), u));
    p_true(b) = p(model.row_of_label(batch.labels[b]));
  }
  return class_balanced_focal(p_true, batch.labels, counts, beta, gamma);
}

double distillation_loss(const Eigen::MatrixXd& old_probs,
                         const Eigen::MatrixXd& new_probs_old_slice, int n_old) {
  require(old_probs.rows() == new_probs_old_slice.rows() &&
              old_probs.cols() == new_probs_old_slice.cols(),
          ErrorKind::contract, "distribution shape mismatch");
  require(old_probs.rows() > 0, ErrorKind::contract, "empty batch");
  require(n_old >= 1, ErrorKind::contract, "n_old must be >= 1");
  for (Eigen::Index b = 0; b < old_probs.rows(); ++b) {
    require(std::abs(old_probs.row(b).sum() - 1.0) <= 1e-5, ErrorKind::contract,
            "old distribution row " + std::to_string(b) + " is not normalized");
    require(std::abs(new_probs_old_slice.row(b).sum() - 1.0) <= 1e-5, ErrorKind::contract,
            "new distribution row " + std::to_string(b) + " is not normalized");
  }
  double acc = 0.0;
  for (Eigen::Index b = 0; b < old_probs.rows(); ++b)
    for (Eigen::Index i = 0; i < old_probs.cols(); ++i) {
      double po = old_probs(b, i);
      if (po <= 0.0) continue;
      double pn = std::max(new_probs_old_slice(b, i), kProbFloor);
      acc += po * std::log(std::max(po, kProbFloor) / pn);
    }
  return n_old * acc / static_cast<double>(old_probs.rows());
}

double margin_loss(const Eigen::VectorXd& sims, int true_index,
                   const std::vector<int>& new_class_indices, double m, int k) {
  require(m >= 0, ErrorKind::contract, "margin must be nonnegative");
  require(k >= 1 && k <= static_cast<int>(new_class_indices.size()), ErrorKind::contract,
          "k must be in [1, |new classes|]");
  require(true_index >= 0 && true_index < sims.size(), ErrorKind::contract,
          "true-class index out of range");
  for (int c : new_class_indices)
    require(c != true_index, ErrorKind::contract,
            "margin loss applies to memory samples of old classes only");
  std::vector<int> order = new_class_indices;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (sims(a) != sims(b)) return sims(a) > sims(b);
    return a < b;
  });
  double acc = 0.0;
  for (int j = 0; j < k; ++j)
    acc += std::max(sims(order[j]) - sims(true_index) + m, 0.0);
  return acc;
}

namespace {

// Shared forward plumbing for the composite objectives.
struct Forward {
  ExpandingModel::ForwardNodes fwd;
  ad::Tape::NodeId sims;    // raw cosine similarities, B x C
  ad::Tape::NodeId logits;  // eta-scaled
  std::vector<int> true_cols;
};

Forward forward_with_sims(ad::Tape& t, ExpandingModel& model, const Batch& batch) {
  Forward f;
  f.fwd = model.forward_nodes(t, batch.x);
  ad::Tape::NodeId w = model.weight_node(t);
  f.sims = t.row_cosine(f.fwd.features, w);
  f.logits = t.scale(f.sims, model.eta_node(t));
  f.true_cols.reserve(batch.labels.size());
  for (int label : batch.labels) f.true_cols.push_back(model.row_of_label(label));
  return f;
}

Eigen::VectorXd cb_weights_for(const Batch& batch, const ClassCounts& counts, double beta) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(batch.labels.size()));
  for (std::size_t b = 0; b < batch.labels.size(); ++b)
    w(static_cast<Eigen::Index>(b)) = cb_weight(beta, counts.count(batch.labels[b]));
  return w;
}

std::vector<int> iota_cols(int n) {
  std::vector<int> cols(n);
  std::iota(cols.begin(), cols.end(), 0);
  return cols;
}

ad::Tape::NodeId focal_from_logits(ad::Tape& t, ad::Tape::NodeId logits,
                                   const std::vector<int>& true_cols,
                                   const Eigen::VectorXd& weights, double gamma,
                                   int num_classes) {
  ad::Tape::NodeId logp = t.log_softmax_cols(logits, iota_cols(num_classes));
  ad::Tape::NodeId p = t.exp_op(logp);
  ad::Tape::NodeId p_true = t.gather_cols(p, true_cols);
  return t.cb_focal(p_true, weights, gamma);
}

ad::Tape::NodeId composite_node(ad::Tape& t, ExpandingModel& model,
                                const Snapshot* snapshot, const Batch& batch,
                                const ClassCounts& counts, const LossConfig& cfg,
                                bool new_phase, LossBreakdown* breakdown) {
  cfg.validate();
  require(model.step_index() >= 2, ErrorKind::illegal_state,
          "composite objectives are defined from step 2 on");
  require(!batch.labels.empty() &&
              batch.labels.size() == static_cast<std::size_t>(batch.x.rows()) &&
              batch.is_memory.size() == batch.labels.size(),
          ErrorKind::contract, "batch fields are inconsistent");

  const double beta = new_phase ? cfg.beta_new : cfg.beta_old;
  const double gamma = new_phase ? cfg.gamma_new : cfg.gamma_old;
  const double l_aux_w = new_phase ? cfg.lambda1 : 0.0;
  const double l_dist_w = new_phase ? cfg.lambda2 : cfg.lambda4;
  const double l_marg_w = new_phase ? cfg.lambda3 : cfg.lambda5;
  const int num_classes = model.num_classes();

  Forward f = forward_with_sims(t, model, batch);
  Eigen::VectorXd weights = cb_weights_for(batch, counts, beta);

  ad::Tape::NodeId l_class =
      focal_from_logits(t, f.logits, f.true_cols, weights, gamma, num_classes);
  std::vector<std::pair<double, ad::Tape::NodeId>> terms{{1.0, l_class}};

  ad::Tape::NodeId l_aux = ad::Tape::kNone;
  if (l_aux_w > 0.0) {
    ad::Tape::NodeId u = model.newest_col_block_node(t);
    ad::Tape::NodeId aux_sims = t.row_cosine(f.fwd.branch_outputs.back(), u);
    l_aux = focal_from_logits(t, aux_sims, f.true_cols, weights, gamma, num_classes);
    terms.push_back({l_aux_w, l_aux});
  }

  ad::Tape::NodeId l_dist = ad::Tape::kNone;
  if (l_dist_w > 0.0) {
    require(snapshot != nullptr, ErrorKind::contract,
            "distillation requires the previous-step snapshot");
    int n_old = snapshot->num_classes();
    require(n_old >= 1 && n_old < num_classes, ErrorKind::contract,
            "snapshot class count does not precede the current model");
    Eigen::MatrixXd target = snapshot->class_probability_matrix(batch.x);
    ad::Tape::NodeId cur_logp = t.log_softmax_cols(f.logits, iota_cols(n_old));
    l_dist = t.kl_to_const(std::move(target), cur_logp, static_cast<double>(n_old));
    terms.push_back({l_dist_w, l_dist});
  }

  ad::Tape::NodeId l_marg = ad::Tape::kNone;
  if (l_marg_w > 0.0) {
    const auto& groups = model.class_groups();
    std::vector<int> new_cols = model.rows_of_group(static_cast<int>(groups.size()) - 1);
    int k_eff = std::min(cfg.top_k, static_cast<int>(new_cols.size()));
    std::vector<char> include = batch.is_memory;
    // a memory sample whose label is in Y_t cannot occur (labels are disjoint
    // across steps); the margin term covers old-class memory samples only
    l_marg = t.margin_hinge(f.sims, f.true_cols, std::move(include), std::move(new_cols),
                            cfg.margin_m, k_eff);
    terms.push_back({l_marg_w, l_marg});
  }

  ad::Tape::NodeId total = t.weighted_sum(terms);
  if (breakdown) {
    breakdown->total = t.value(total)(0, 0);
    breakdown->l_class = t.value(l_class)(0, 0);
    breakdown->l_aux = l_aux == ad::Tape::kNone ? 0.0 : t.value(l_aux)(0, 0);
    breakdown->l_dist = l_dist == ad::Tape::kNone ? 0.0 : t.value(l_dist)(0, 0);
    breakdown->l_marg = l_marg == ad::Tape::kNone ? 0.0 : t.value(l_marg)(0, 0);
  }
  return total;
}

}  // namespace

ad::Tape::NodeId classification_loss_node(ad::Tape& t, ExpandingModel& model,
                                          const Batch& batch, const ClassCounts& counts,
                                          double beta, double gamma,
                                          LossBreakdown* breakdown) {
  require(!batch.labels.empty() &&
              batch.labels.size() == static_cast<std::size_t>(batch.x.rows()),
          ErrorKind::contract, "batch fields are inconsistent");
  Forward f = forward_with_sims(t, model, batch);
  Eigen::VectorXd weights = cb_weights_for(batch, counts, beta);
  ad::Tape::NodeId l_class =
      focal_from_logits(t, f.logits, f.true_cols, weights, gamma, model.num_classes());
  if (breakdown) {
    breakdown->total = breakdown->l_class = t.value(l_class)(0, 0);
    breakdown->l_aux = breakdown->l_dist = breakdown->l_marg = 0.0;
  }
  return l_class;
}

ad::Tape::NodeId auxiliary_loss_node(ad::Tape& t, ExpandingModel& model,
                                     const Batch& batch, const ClassCounts& counts,
                                     double beta, double gamma) {
  require(model.step_index() >= 2, ErrorKind::illegal_state,
          "auxiliary loss is defined from step 2 on");
  auto fwd = model.forward_nodes(t, batch.x);
  ad::Tape::NodeId u = model.newest_col_block_node(t);
  ad::Tape::NodeId aux_sims = t.row_cosine(fwd.branch_outputs.back(), u);
  std::vector<int> true_cols;
  for (int label : batch.labels) true_cols.push_back(model.row_of_label(label));
  return focal_from_logits(t, aux_sims, true_cols, cb_weights_for(batch, counts, beta),
                           gamma, model.num_classes());
}

ad::Tape::NodeId distillation_loss_node(ad::Tape& t, ExpandingModel& model,
                                        const Snapshot& snapshot, const Batch& batch) {
  require(model.step_index() >= 2, ErrorKind::illegal_state,
          "distillation is defined from step 2 on");
  int n_old = snapshot.num_classes();
  require(n_old >= 1 && n_old < model.num_classes(), ErrorKind::contract,
          "snapshot class count does not precede the current model");
  Forward f = forward_with_sims(t, model, batch);
  Eigen::MatrixXd target = snapshot.class_probability_matrix(batch.x);
  ad::Tape::NodeId cur_logp = t.log_softmax_cols(f.logits, iota_cols(n_old));
  return t.kl_to_const(std::move(target), cur_logp, static_cast<double>(n_old));
}

ad::Tape::NodeId margin_loss_node(ad::Tape& t, ExpandingModel& model, const Batch& batch,
                                  double m, int k) {
  require(model.step_index() >= 2, ErrorKind::illegal_state,
          "margin loss is defined from step 2 on");
  Forward f = forward_with_sims(t, model, batch);
  std::vector<int> new_cols =
      model.rows_of_group(static_cast<int>(model.class_groups().size()) - 1);
  return t.margin_hinge(f.sims, f.true_cols, batch.is_memory, std::move(new_cols), m, k);
}

ad::Tape::NodeId composite_new_node(ad::Tape& t, ExpandingModel& model,
                                    const Snapshot* snapshot, const Batch& batch,
                                    const ClassCounts& counts, const LossConfig& cfg,
                                    LossBreakdown* breakdown) {
  return composite_node(t, model, snapshot, batch, counts, cfg, true, breakdown);
}

ad::Tape::NodeId composite_old_node(ad::Tape& t, ExpandingModel& model,
                                    const Snapshot* snapshot, const Batch& batch,
                                    const ClassCounts& counts, const LossConfig& cfg,
                                    LossBreakdown* breakdown) {
  return composite_node(t, model, snapshot, batch, counts, cfg, false, breakdown);
}

LossBreakdown composite_new(ExpandingModel& model, const Snapshot* snapshot,
                            const Batch& batch, const ClassCounts& counts,
                            const LossConfig& cfg) {
  ad::Tape t;
  LossBreakdown out;
  composite_new_node(t, model, snapshot, batch, counts, cfg, &out);
  return out;
}

LossBreakdown composite_old(ExpandingModel& model, const Snapshot* snapshot,
                            const Batch& batch, const ClassCounts& counts,
                            const LossConfig& cfg) {
  ad::Tape t;
  LossBreakdown out;
  composite_old_node(t, model, snapshot, batch, counts, cfg, &out);
  return out;
}

}  // namespace iclkit
