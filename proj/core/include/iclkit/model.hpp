#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "iclkit/graph.hpp"
#include "iclkit/nn.hpp"

namespace iclkit {

enum class Phase { new_classes, old_classes };
enum class BranchInit { warm_start, random_init };

// Architecture of the backbone and its low/high split. The low-level part is
// shared across steps; everything after the split is the branch template that
// gets duplicated at each incremental step.
struct ModelSpec {
  nn::InputSig input{false, 16, {}};
  std::vector<int> dense_hidden{48};    // vector mode
  std::vector<int> conv_channels{8, 16};  // image mode
  int split_index = 1;   // processing units kept in the shared low-level part
  int feature_dim = 16;  // d: output width of every branch
  nn::Activation activation = nn::Activation::tanh;
  bool bias = true;
  BranchInit branch_init = BranchInit::warm_start;
  // optional checkpoint whose matching parameters seed the fresh model
  std::string init_weights_file;

  std::vector<nn::LayerSpec> low_level_layers() const;
  std::vector<nn::LayerSpec> branch_layers() const;
  int unit_count() const;
};

// Cosine-softmax kernels, usable standalone.
Eigen::VectorXd cosine_similarities(const Eigen::VectorXd& z, const Eigen::MatrixXd& w,
                                    double eps = 1e-12);
Eigen::VectorXd softmax_vec(const Eigen::VectorXd& logits);
// p_i = exp(eta * cos(z, w_i)) / sum_j exp(eta * cos(z, w_j))
Eigen::VectorXd cosine_softmax(const Eigen::VectorXd& z, const Eigen::MatrixXd& w,
                               double eta);

class Snapshot;

// The dynamically expanding network: one shared low-level extractor, one
// d-dimensional branch per step, and a block-structured cosine classifier
// whose weight matrix grows row-wise (classes) and column-wise (features).
class ExpandingModel {
 public:
  ExpandingModel(ModelSpec spec, std::vector<int> initial_classes, std::uint64_t seed);

  // --- inference -----------------------------------------------------------
  Eigen::MatrixXd forward_features(const Eigen::MatrixXd& x) const;  // B x t*d
  Eigen::MatrixXd newest_branch_features(const Eigen::MatrixXd& x) const;  // B x d
  Eigen::VectorXd class_probabilities(const Eigen::VectorXd& z) const;
  Eigen::VectorXd aux_probabilities(const Eigen::VectorXd& h_newest) const;
  std::vector<int> predict(const Eigen::MatrixXd& x) const;  // labels

  // --- growth and phases ---------------------------------------------------
  void expand(const std::vector<int>& new_classes);
  // Row-only growth used by the no-expansion ablation and the naive
  // reference learners: adds class rows but no branch and no new columns.
  // With retrain_newest_branch the last branch keeps playing the role of the
  // current step's extractor (trainable in the NEW phase, frozen in OLD).
  void expand_rows_only(const std::vector<int>& new_classes, bool freeze_old,
                        bool retrain_newest_branch = false);
  void set_phase(Phase phase);
  Phase phase() const { return phase_; }
  void set_all_trainable();

  Snapshot snapshot_for_distillation() const;

  // --- graph building (training path) --------------------------------------
  struct ForwardNodes {
    ad::Tape::NodeId features;                    // B x t*d
    std::vector<ad::Tape::NodeId> branch_outputs;  // each B x d
  };
  ForwardNodes forward_nodes(ad::Tape& t, const Eigen::MatrixXd& x);
  ad::Tape::NodeId weight_node(ad::Tape& t);           // C x t*d
  ad::Tape::NodeId newest_col_block_node(ad::Tape& t);  // C x d
  ad::Tape::NodeId eta_node(ad::Tape& t);              // 1x1, exp(rho)

  // --- introspection --------------------------------------------------------
  int step_index() const { return step_; }
  int num_classes() const;
  int feature_dim() const { return spec_.feature_dim; }
  int feature_cols() const;  // columns of the assembled weight matrix
  int num_branches() const { return static_cast<int>(branches_.size()); }
  bool expanded_this_step() const { return new_col_step_ >= 0; }
  int new_row_group() const { return new_row_group_; }
  int new_col_step() const { return new_col_step_; }
  const std::vector<std::vector<int>>& class_groups() const { return class_groups_; }
  const ModelSpec& spec() const { return spec_; }
  double temperature() const { return std::exp(rho_.value(0, 0)); }

  int row_of_label(int label) const;
  const std::vector<int>& row_labels() const { return row_labels_; }
  std::vector<int> rows_of_group(int group) const;

  Eigen::MatrixXd weight_matrix() const;
  Eigen::MatrixXd newest_col_block() const;

  // Parameter access. Names are unique and stable across expansion.
  std::vector<ad::Parameter*> all_params();
  std::vector<const ad::Parameter*> all_params() const;
  std::vector<ad::Parameter*> trainable_params();
  // theta_L + theta_{H_1..t-1} + W_{t-1} blocks: everything the freezing
  // contract requires untouched during step t.
  std::vector<const ad::Parameter*> legacy_params() const;
  // theta_{H_t} + U_t blocks: frozen during OLD-phase passes.
  std::vector<const ad::Parameter*> old_phase_frozen_params() const;
  const ad::Parameter& rho() const { return rho_; }
  ad::Parameter& rho() { return rho_; }

  struct BlockRef {
    int row_step;  // 0-based step that created the rows
    int col_step;  // 0-based step that created the columns
    const ad::Parameter* param;
  };
  std::vector<BlockRef> classifier_blocks() const;
  std::vector<std::string> branch_prefixes() const;
  bool freezing_enabled() const { return freezing_enabled_; }
  bool retrain_newest_branch() const { return retrain_newest_branch_; }

  // Rebuilds a model's structure without meaningful parameter values, so a
  // checkpoint loader can fill them in by name afterwards.
  static ExpandingModel restore_topology(const ModelSpec& spec,
                                         const std::vector<std::vector<int>>& groups,
                                         const std::vector<std::string>& branch_prefixes,
                                         int new_row_group, int new_col_step,
                                         bool freezing_enabled, bool retrain_newest_branch,
                                         Phase phase);

 private:
  friend class Snapshot;

  template <typename Self, typename TapeRef>
  static ad::Tape::NodeId weight_node_impl(Self& self, TapeRef& t);
  template <typename Self, typename TapeRef>
  static ForwardNodes forward_nodes_impl(Self& self, TapeRef& t, const Eigen::MatrixXd& x);

  void check_input(const Eigen::MatrixXd& x) const;
  void add_row_group(const std::vector<int>& new_classes);
  Eigen::MatrixXd fresh_block(int rows) const;
  void refresh_trainable_flags();

  ModelSpec spec_;
  nn::Stack low_level_;
  std::vector<nn::Stack> branches_;
  // blocks_[r][c]: weights of row group r against the features of branch c.
  std::vector<std::vector<ad::Parameter>> blocks_;
  ad::Parameter rho_;
  std::vector<std::vector<int>> class_groups_;
  std::vector<int> row_labels_;
  int step_ = 1;
  Phase phase_ = Phase::new_classes;
  int new_row_group_ = 0;   // row group created at the current step
  int new_col_step_ = 0;    // column step created at the current step, -1 if none
  bool freezing_enabled_ = true;
  bool retrain_newest_branch_ = false;
  mutable std::mt19937_64 rng_;
};

// Immutable deep copy of a trained model; safe to share for read-only
// inference while the live model keeps training.
class Snapshot {
 public:
  explicit Snapshot(const ExpandingModel& m) : model_(m) {}

  Eigen::MatrixXd forward_features(const Eigen::MatrixXd& x) const {
    return model_.forward_features(x);
  }
  Eigen::VectorXd class_probabilities(const Eigen::VectorXd& z) const {
    return model_.class_probabilities(z);
  }
  // Row b holds the probabilities of sample b over this snapshot's classes.
  Eigen::MatrixXd class_probability_matrix(const Eigen::MatrixXd& x) const;

  int num_classes() const { return model_.num_classes(); }
  int step_index() const { return model_.step_index(); }
  const ExpandingModel& model() const { return model_; }

 private:
  ExpandingModel model_;
};

}  // namespace iclkit
