#pragma once

#include <map>
#include <vector>

#include "iclkit/model.hpp"

namespace iclkit {

// Hyperparameters of the two composite objectives. The (beta, gamma) pair
// differs between the new-class and old-class phases.
struct LossConfig {
  double lambda1 = 1.0;  // auxiliary
  double lambda2 = 0.5;  // distillation (new phase)
  double lambda3 = 1.0;  // margin (new phase)
  double lambda4 = 1.0;  // distillation (old phase)
  double lambda5 = 1.0;  // margin (old phase)
  double beta_new = 0.9;
  double gamma_new = 1.0;
  double beta_old = 0.99;
  double gamma_old = 2.0;
  double margin_m = 0.2;
  int top_k = 2;

  void validate() const;
};

// Per-class sample counts over the current training set S_t.
class ClassCounts {
 public:
  ClassCounts() = default;
  void add(int label, int count = 1);
  bool has(int label) const { return counts_.count(label) > 0; }
  int count(int label) const;
  int total() const;
  const std::map<int, int>& by_class() const { return counts_; }

 private:
  std::map<int, int> counts_;
};

// (1 - beta) / (1 - beta^n)
double cb_weight(double beta, int n);

struct Batch {
  Eigen::MatrixXd x;            // one sample per row
  std::vector<int> labels;
  std::vector<char> is_memory;  // margin loss applies to memory samples only
};

struct LossBreakdown {
  double total = 0.0;
  double l_class = 0.0;
  double l_aux = 0.0;
  double l_dist = 0.0;
  double l_marg = 0.0;
};

// --- value-level components -------------------------------------------------

// mean over samples of -[(1-beta)/(1-beta^{n_y})] (1-p_y)^gamma log p_y,
// with probabilities floored at 1e-12 inside the log.
double class_balanced_focal(const Eigen::VectorXd& p_true, const std::vector<int>& labels,
                            const ClassCounts& counts, double beta, double gamma);

// Class-balanced focal loss on the newest branch's cosine probabilities.
double auxiliary_loss(const ExpandingModel& model, const Batch& batch,
                      const ClassCounts& counts, double beta, double gamma);

// mean over batch of n_old * sum_i old_p_i log(old_p_i / new_p_i); rows must
// be normalized within 1e-5.
double distillation_loss(const Eigen::MatrixXd& old_probs,
                         const Eigen::MatrixXd& new_probs_old_slice, int n_old);

// Sum over the k highest-similarity new classes of
// max(sim_i - sim_true + m, 0) for a single memory sample.
double margin_loss(const Eigen::VectorXd& sims, int true_index,
                   const std::vector<int>& new_class_indices, double m, int k);

// --- graph builders (training path) -----------------------------------------

ad::Tape::NodeId classification_loss_node(ad::Tape& t, ExpandingModel& model,
                                          const Batch& batch, const ClassCounts& counts,
                                          double beta, double gamma,
                                          LossBreakdown* breakdown = nullptr);

// Standalone component builders; each runs its own forward pass.
ad::Tape::NodeId auxiliary_loss_node(ad::Tape& t, ExpandingModel& model,
                                     const Batch& batch, const ClassCounts& counts,
                                     double beta, double gamma);
ad::Tape::NodeId distillation_loss_node(ad::Tape& t, ExpandingModel& model,
                                        const Snapshot& snapshot, const Batch& batch);
ad::Tape::NodeId margin_loss_node(ad::Tape& t, ExpandingModel& model, const Batch& batch,
                                  double m, int k);

// L_class + l1*L_aux + l2*L_dist + l3*L_marg with the new-phase (beta, gamma).
ad::Tape::NodeId composite_new_node(ad::Tape& t, ExpandingModel& model,
                                    const Snapshot* snapshot, const Batch& batch,
                                    const ClassCounts& counts, const LossConfig& cfg,
                                    LossBreakdown* breakdown = nullptr);

// L_class + l4*L_dist + l5*L_marg with the old-phase (beta, gamma); no aux.
ad::Tape::NodeId composite_old_node(ad::Tape& t, ExpandingModel& model,
                                    const Snapshot* snapshot, const Batch& batch,
                                    const ClassCounts& counts, const LossConfig& cfg,
                                    LossBreakdown* breakdown = nullptr);

// Value-level wrappers around the graph builders.
LossBreakdown composite_new(ExpandingModel& model, const Snapshot* snapshot,
                            const Batch& batch, const ClassCounts& counts,
                            const LossConfig& cfg);
LossBreakdown composite_old(ExpandingModel& model, const Snapshot* snapshot,
                            const Batch& batch, const ClassCounts& counts,
                            const LossConfig& cfg);

}  // namespace iclkit
