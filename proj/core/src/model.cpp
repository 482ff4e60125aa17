#include "iclkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace iclkit {

std::vector<nn::LayerSpec> ModelSpec::low_level_layers() const {
  std::vector<nn::LayerSpec> out;
  if (!input.is_image) {
    for (int i = 0; i < split_index; ++i) {
      out.push_back({nn::LayerSpec::Kind::dense, dense_hidden[i], activation});
      out.push_back({nn::LayerSpec::Kind::activation, 0, activation});
    }
  } else {
    for (int i = 0; i < split_index; ++i) {
      out.push_back({nn::LayerSpec::Kind::conv3x3, conv_channels[i], activation});
      out.push_back({nn::LayerSpec::Kind::activation, 0, activation});
      out.push_back({nn::LayerSpec::Kind::avg_pool2, 0, activation});
    }
  }
  return out;
}

std::vector<nn::LayerSpec> ModelSpec::branch_layers() const {
  std::vector<nn::LayerSpec> out;
  if (!input.is_image) {
    for (std::size_t i = split_index; i < dense_hidden.size(); ++i) {
      out.push_back({nn::LayerSpec::Kind::dense, dense_hidden[i], activation});
      out.push_back({nn::LayerSpec::Kind::activation, 0, activation});
    }
  } else {
    for (std::size_t i = split_index; i < conv_channels.size(); ++i) {
      out.push_back({nn::LayerSpec::Kind::conv3x3, conv_channels[i], activation});
      out.push_back({nn::LayerSpec::Kind::activation, 0, activation});
      out.push_back({nn::LayerSpec::Kind::avg_pool2, 0, activation});
    }
  }
  out.push_back({nn::LayerSpec::Kind::dense, feature_dim, activation});
  return out;
}

int ModelSpec::unit_count() const {
  return input.is_image ? static_cast<int>(conv_channels.size())
                        : static_cast<int>(dense_hidden.size());
}

Eigen::VectorXd cosine_similarities(const Eigen::VectorXd& z, const Eigen::MatrixXd& w,
                                    double eps) {
  double zn = std::max(z.norm(), eps);
  Eigen::VectorXd sims(w.rows());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    double wn = std::max(w.row(i).norm(), eps);
    sims(i) = w.row(i).dot(z) / (zn * wn);
  }
  return sims;
}

Eigen::VectorXd softmax_vec(const Eigen::VectorXd& logits) {
  double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

Eigen::VectorXd cosine_softmax(const Eigen::VectorXd& z, const Eigen::MatrixXd& w,
                               double eta) {
  return softmax_vec(eta * cosine_similarities(z, w));
}

ExpandingModel::ExpandingModel(ModelSpec spec, std::vector<int> initial_classes,
                               std::uint64_t seed)
    : spec_(std::move(spec)), rng_(seed) {
  require(!initial_classes.empty(), ErrorKind::contract, "initial class set is empty");
  require(spec_.feature_dim >= 1, ErrorKind::config, "feature_dim must be >= 1");
  require(spec_.split_index >= 0 && spec_.split_index <= spec_.unit_count(),
          ErrorKind::config, "split_index out of range");
  std::set<int> uniq(initial_classes.begin(), initial_classes.end());
  require(uniq.size() == initial_classes.size(), ErrorKind::stream_contract,
          "duplicate labels in initial class set");

  low_level_ = nn::Stack(spec_.low_level_layers(), spec_.input, spec_.bias, "low", rng_);
  branches_.emplace_back(spec_.branch_layers(), low_level_.output(), spec_.bias, "h1", rng_);

  rho_ = ad::Parameter("cls.rho", Eigen::MatrixXd::Zero(1, 1), true);
  class_groups_.push_back(initial_classes);
  blocks_.emplace_back();
  blocks_[0].push_back(ad::Parameter(
      "cls.r0.c0", fresh_block(static_cast<int>(initial_classes.size()))));
  for (int label : initial_classes) row_labels_.push_back(label);
}

Eigen::MatrixXd ExpandingModel::fresh_block(int rows) const {
  return nn::init_weights(rows, spec_.feature_dim, spec_.feature_dim, spec_.feature_dim,
                          nn::Activation::identity, rng_);
}

void ExpandingModel::check_input(const Eigen::MatrixXd& x) const {
  require(!branches_.empty(), ErrorKind::illegal_state, "model has no branches");
  require(x.cols() == spec_.input.flat(), ErrorKind::shape,
          "input width " + std::to_string(x.cols()) + " does not match backbone input " +
              std::to_string(spec_.input.flat()));
}

template <typename Self, typename TapeRef>
ExpandingModel::ForwardNodes ExpandingModel::forward_nodes_impl(Self& self, TapeRef& t,
                                                                const Eigen::MatrixXd& x) {
  self.check_input(x);
  ad::Tape::NodeId cur = t.constant(x);
  ad::Tape::NodeId low = self.low_level_.forward(t, cur);
  ForwardNodes out;
  for (auto& branch : self.branches_) out.branch_outputs.push_back(branch.forward(t, low));
  out.features = out.branch_outputs.size() == 1 ? out.branch_outputs[0]
                                                : t.concat_cols(out.branch_outputs);
  return out;
}

ExpandingModel::ForwardNodes ExpandingModel::forward_nodes(ad::Tape& t,
                                                           const Eigen::MatrixXd& x) {
  return forward_nodes_impl(*this, t, x);
}

template <typename Self, typename TapeRef>
ad::Tape::NodeId ExpandingModel::weight_node_impl(Self& self, TapeRef& t) {
  std::vector<ad::Tape::NodeId> row_blocks;
  for (auto& row : self.blocks_) {
    std::vector<ad::Tape::NodeId> cols;
    for (auto& block : row) cols.push_back(t.param(block));
    row_blocks.push_back(cols.size() == 1 ? cols[0] : t.concat_cols(cols));
  }
  return row_blocks.size() == 1 ? row_blocks[0] : t.concat_rows(row_blocks);
}

ad::Tape::NodeId ExpandingModel::weight_node(ad::Tape& t) {
  return weight_node_impl(*this, t);
}

ad::Tape::NodeId ExpandingModel::newest_col_block_node(ad::Tape& t) {
  std::vector<ad::Tape::NodeId> rows;
  for (auto& row : blocks_) rows.push_back(t.param(row.back()));
  return rows.size() == 1 ? rows[0] : t.concat_rows(rows);
}

ad::Tape::NodeId ExpandingModel::eta_node(ad::Tape& t) {
  return t.exp_op(t.param(rho_));
}

Eigen::MatrixXd ExpandingModel::forward_features(const Eigen::MatrixXd& x) const {
  ad::Tape t;
  return t.value(forward_nodes_impl(*this, t, x).features);
}

Eigen::MatrixXd ExpandingModel::newest_branch_features(const Eigen::MatrixXd& x) const {
  ad::Tape t;
  return t.value(forward_nodes_impl(*this, t, x).branch_outputs.back());
}

Eigen::MatrixXd ExpandingModel::weight_matrix() const {
  Eigen::MatrixXd w(num_classes(), feature_cols());
  Eigen::Index at_row = 0;
  for (const auto& row : blocks_) {
    Eigen::Index at_col = 0;
    Eigen::Index h = row[0].value.rows();
    for (const auto& block : row) {
      w.block(at_row, at_col, h, block.value.cols()) = block.value;
      at_col += block.value.cols();
    }
    at_row += h;
  }
  return w;
}

Eigen::MatrixXd ExpandingModel::newest_col_block() const {
  Eigen::MatrixXd u(num_classes(), spec_.feature_dim);
  Eigen::Index at = 0;
  for (const auto& row : blocks_) {
    u.middleRows(at, row.back().value.rows()) = row.back().value;
    at += row.back().value.rows();
  }
  return u;
}

Eigen::VectorXd ExpandingModel::class_probabilities(const Eigen::VectorXd& z) const {
  require(z.size() == feature_cols(), ErrorKind::shape,
          "feature vector length " + std::to_string(z.size()) + " != " +
              std::to_string(feature_cols()));
  require(z.norm() > 0.0, ErrorKind::degenerate_similarity, "zero-norm feature vector");
  Eigen::MatrixXd w = weight_matrix();
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    require(w.row(i).norm() > 0.0, ErrorKind::degenerate_similarity,
            "zero-norm classifier row " + std::to_string(i));
  return cosine_softmax(z, w, temperature());
}

Eigen::VectorXd ExpandingModel::aux_probabilities(const Eigen::VectorXd& h_newest) const {
  require(step_ >= 2, ErrorKind::illegal_state,
          "aux probabilities are defined from step 2 on");
  require(h_newest.size() == spec_.feature_dim, ErrorKind::shape,
          "newest-branch feature length != d");
  require(h_newest.norm() > 0.0, ErrorKind::degenerate_similarity,
          "zero-norm feature vector");
  Eigen::MatrixXd u = newest_col_block();
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    require(u.row(i).norm() > 0.0, ErrorKind::degenerate_similarity,
            "zero-norm classifier block row " + std::to_string(i));
  return softmax_vec(cosine_similarities(h_newest, u));
}

std::vector<int> ExpandingModel::predict(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd z = forward_features(x);
  Eigen::MatrixXd w = weight_matrix();
  std::vector<int> labels(z.rows());
  for (Eigen::Index b = 0; b < z.rows(); ++b) {
    Eigen::VectorXd sims = cosine_similarities(z.row(b).transpose(), w);
    Eigen::Index best = 0;
    sims.maxCoeff(&best);
    labels[b] = row_labels_[static_cast<std::size_t>(best)];
  }
  return labels;
}

void ExpandingModel::add_row_group(const std::vector<int>& new_classes) {
  require(!new_classes.empty(), ErrorKind::contract, "expansion with an empty class set");
  std::set<int> seen(row_labels_.begin(), row_labels_.end());
  for (int label : new_classes)
    require(!seen.count(label), ErrorKind::stream_contract,
            "class " + std::to_string(label) + " already present");
  std::set<int> uniq(new_classes.begin(), new_classes.end());
  require(uniq.size() == new_classes.size(), ErrorKind::stream_contract,
          "duplicate labels in new class set");

  int r = static_cast<int>(blocks_.size());
  blocks_.emplace_back();
  for (std::size_t c = 0; c < branches_.size(); ++c)
    blocks_[r].push_back(ad::Parameter(
        "cls.r" + std::to_string(r) + ".c" + std::to_string(c),
        fresh_block(static_cast<int>(new_classes.size()))));
  class_groups_.push_back(new_classes);
  for (int label : new_classes) row_labels_.push_back(label);
}

void ExpandingModel::expand(const std::vector<int>& new_classes) {
  int t = step_ + 1;
  // new branch: same architecture, warm-started from the previous one
  nn::Stack branch;
  if (spec_.branch_init == BranchInit::warm_start) {
    branch = branches_.back().clone_renamed("h" + std::to_string(t));
  } else {
    branch = nn::Stack(spec_.branch_layers(), low_level_.output(), spec_.bias,
                       "h" + std::to_string(t), rng_);
  }

  // U_t: one new column block per existing row group
  int c = static_cast<int>(branches_.size());
  std::vector<ad::Parameter> pending;
  for (std::size_t r = 0; r < blocks_.size(); ++r)
    pending.push_back(ad::Parameter(
        "cls.r" + std::to_string(r) + ".c" + std::to_string(c),
        fresh_block(static_cast<int>(class_groups_[r].size()))));

  branches_.push_back(std::move(branch));
  for (std::size_t r = 0; r < blocks_.size(); ++r)
    blocks_[r].push_back(std::move(pending[r]));
  add_row_group(new_classes);  // V_t plus the Y_t part of U_t

  step_ = t;
  new_row_group_ = static_cast<int>(blocks_.size()) - 1;
  new_col_step_ = static_cast<int>(branches_.size()) - 1;
  phase_ = Phase::new_classes;
  freezing_enabled_ = true;
  refresh_trainable_flags();
}

void ExpandingModel::expand_rows_only(const std::vector<int>& new_classes,
                                      bool freeze_old, bool retrain_newest_branch) {
  add_row_group(new_classes);
  step_ += 1;
  new_row_group_ = static_cast<int>(blocks_.size()) - 1;
  new_col_step_ = -1;
  phase_ = Phase::new_classes;
  freezing_enabled_ = freeze_old;
  retrain_newest_branch_ = retrain_newest_branch;
  refresh_trainable_flags();
}

void ExpandingModel::set_phase(Phase phase) {
  require(step_ >= 2, ErrorKind::illegal_state, "step 1 has no training phases");
  phase_ = phase;
  refresh_trainable_flags();
}

void ExpandingModel::set_all_trainable() {
  freezing_enabled_ = false;
  refresh_trainable_flags();
}

void ExpandingModel::refresh_trainable_flags() {
  if (!freezing_enabled_) {
    low_level_.set_trainable(true);
    for (auto& b : branches_) b.set_trainable(true);
    for (auto& row : blocks_)
      for (auto& block : row) block.trainable = true;
    rho_.trainable = true;
    return;
  }
  bool initial = step_ == 1;
  low_level_.set_trainable(initial);
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    bool acts_as_newest =
        static_cast<int>(k) == new_col_step_ ||
        (retrain_newest_branch_ && k + 1 == branches_.size());
    branches_[k].set_trainable(initial ||
                               (acts_as_newest && phase_ == Phase::new_classes));
  }
  for (std::size_t r = 0; r < blocks_.size(); ++r)
    for (std::size_t c = 0; c < blocks_[r].size(); ++c) {
      bool in_v = static_cast<int>(r) == new_row_group_ &&
                  static_cast<int>(c) != new_col_step_;
      bool in_u = new_col_step_ >= 0 && static_cast<int>(c) == new_col_step_;
      blocks_[r][c].trainable =
          initial || in_v || (in_u && phase_ == Phase::new_classes);
    }
  rho_.trainable = true;
}

Snapshot ExpandingModel::snapshot_for_distillation() const { return Snapshot(*this); }

int ExpandingModel::num_classes() const { return static_cast<int>(row_labels_.size()); }

int ExpandingModel::feature_cols() const {
  return static_cast<int>(branches_.size()) * spec_.feature_dim;
}

int ExpandingModel::row_of_label(int label) const {
  for (std::size_t i = 0; i < row_labels_.size(); ++i)
    if (row_labels_[i] == label) return static_cast<int>(i);
  raise(ErrorKind::stream_contract, "label " + std::to_string(label) + " is unseen");
}

std::vector<int> ExpandingModel::rows_of_group(int group) const {
  require(group >= 0 && group < static_cast<int>(class_groups_.size()),
          ErrorKind::contract, "bad class group index");
  int start = 0;
  for (int g = 0; g < group; ++g) start += static_cast<int>(class_groups_[g].size());
  std::vector<int> rows(class_groups_[group].size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + static_cast<int>(i);
  return rows;
}

std::vector<ad::Parameter*> ExpandingModel::all_params() {
  std::vector<ad::Parameter*> out = low_level_.params();
  for (auto& b : branches_)
    for (auto* p : b.params()) out.push_back(p);
  for (auto& row : blocks_)
    for (auto& block : row) out.push_back(&block);
  out.push_back(&rho_);
  return out;
}

std::vector<const ad::Parameter*> ExpandingModel::all_params() const {
  std::vector<const ad::Parameter*> out;
  for (const auto* p : low_level_.params()) out.push_back(p);
  for (const auto& b : branches_)
    for (const auto* p : b.params()) out.push_back(p);
  for (const auto& row : blocks_)
    for (const auto& block : row) out.push_back(&block);
  out.push_back(&rho_);
  return out;
}

std::vector<ad::Parameter*> ExpandingModel::trainable_params() {
  std::vector<ad::Parameter*> out;
  for (auto* p : all_params())
    if (p->trainable) out.push_back(p);
  return out;
}

std::vector<const ad::Parameter*> ExpandingModel::legacy_params() const {
  std::vector<const ad::Parameter*> out;
  if (step_ == 1) return out;
  for (const auto* p : low_level_.params()) out.push_back(p);
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    if (static_cast<int>(k) == new_col_step_) continue;
    if (retrain_newest_branch_ && k + 1 == branches_.size()) continue;
    for (const auto* p : branches_[k].params()) out.push_back(p);
  }
  for (std::size_t r = 0; r < blocks_.size(); ++r) {
    if (static_cast<int>(r) == new_row_group_) continue;
    for (std::size_t c = 0; c < blocks_[r].size(); ++c) {
      if (new_col_step_ >= 0 && static_cast<int>(c) == new_col_step_) continue;
      out.push_back(&blocks_[r][c]);
    }
  }
  return out;
}

std::vector<const ad::Parameter*> ExpandingModel::old_phase_frozen_params() const {
  std::vector<const ad::Parameter*> out;
  if (step_ == 1) return out;
  if (new_col_step_ >= 0) {
    for (const auto* p : branches_[new_col_step_].params()) out.push_back(p);
    for (const auto& row : blocks_) out.push_back(&row[new_col_step_]);
  } else if (retrain_newest_branch_) {
    for (const auto* p : branches_.back().params()) out.push_back(p);
  }
  return out;
}

std::vector<std::string> ExpandingModel::branch_prefixes() const {
  std::vector<std::string> out;
  for (const auto& b : branches_) out.push_back(b.prefix());
  return out;
}

ExpandingModel ExpandingModel::restore_topology(
    const ModelSpec& spec, const std::vector<std::vector<int>>& groups,
    const std::vector<std::string>& branch_prefixes, int new_row_group, int new_col_step,
    bool freezing_enabled, bool retrain_newest_branch, Phase phase) {
  require(!groups.empty() && !branch_prefixes.empty(), ErrorKind::io,
          "checkpoint topology is empty");
  ExpandingModel m(spec, groups[0], 0);
  m.branches_.clear();
  for (const auto& prefix : branch_prefixes)
    m.branches_.emplace_back(spec.branch_layers(), m.low_level_.output(), spec.bias,
                             prefix, m.rng_);
  m.blocks_.clear();
  m.class_groups_.clear();
  m.row_labels_.clear();
  for (std::size_t r = 0; r < groups.size(); ++r) {
    m.blocks_.emplace_back();
    for (std::size_t c = 0; c < branch_prefixes.size(); ++c)
      m.blocks_[r].push_back(ad::Parameter(
          "cls.r" + std::to_string(r) + ".c" + std::to_string(c),
          Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(groups[r].size()),
                                spec.feature_dim)));
    m.class_groups_.push_back(groups[r]);
    for (int label : groups[r]) m.row_labels_.push_back(label);
  }
  m.step_ = static_cast<int>(groups.size());
  m.new_row_group_ = new_row_group;
  m.new_col_step_ = new_col_step;
  m.freezing_enabled_ = freezing_enabled;
  m.retrain_newest_branch_ = retrain_newest_branch;
  m.phase_ = phase;
  return m;
}

std::vector<ExpandingModel::BlockRef> ExpandingModel::classifier_blocks() const {
  std::vector<BlockRef> out;
  for (std::size_t r = 0; r < blocks_.size(); ++r)
    for (std::size_t c = 0; c < blocks_[r].size(); ++c)
      out.push_back({static_cast<int>(r), static_cast<int>(c), &blocks_[r][c]});
  return out;
}

Eigen::MatrixXd Snapshot::class_probability_matrix(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd z = model_.forward_features(x);
  Eigen::MatrixXd w = model_.weight_matrix();
  double eta = model_.temperature();
  Eigen::MatrixXd p(z.rows(), w.rows());
  for (Eigen::Index b = 0; b < z.rows(); ++b)
    p.row(b) = cosine_softmax(z.row(b).transpose(), w, eta).transpose();
  return p;
}

}  // namespace iclkit
