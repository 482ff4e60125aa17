#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "iclkit/errors.hpp"

namespace iclkit::ad {

// A named tensor with persistent storage. Gradients accumulate into `grad`
// only while `trainable` is true; frozen parameters never receive gradient.
struct Parameter {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Eigen::MatrixXd v, bool train = true)
      : name(std::move(n)), value(std::move(v)), trainable(train) {
    grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  }

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct ImageShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  int pixels() const { return channels * height * width; }
};

// Reverse-mode tape. Nodes are appended in topological order; backward()
// walks them in reverse. One tape per forward pass, then discard.
class Tape {
 public:
  using NodeId = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeId constant(Eigen::MatrixXd v);
  NodeId param(Parameter& p);
  NodeId param(const Parameter& p);  // read-only leaf, never receives gradient

  // y = x * w^T + 1 b^T; w is (out x in), b is (1 x out) or kNone.
  NodeId linear(NodeId x, NodeId w, NodeId b);
  NodeId tanh_op(NodeId x);
  NodeId relu_op(NodeId x);
  NodeId exp_op(NodeId x);
  NodeId concat_cols(const std::vector<NodeId>& xs);
  NodeId concat_rows(const std::vector<NodeId>& xs);

  // s(b,c) = cos(z_b, w_c) with norms clamped at `eps`.
  NodeId row_cosine(NodeId z, NodeId w, double eps = 1e-12);

  // y = s * x where s is a 1x1 node.
  NodeId scale(NodeId x, NodeId s);

  // Log-softmax over the listed columns of `x`; output has one column per
  // entry of `cols`, in order.
  NodeId log_softmax_cols(NodeId x, std::vector<int> cols);

  // out(b, 0) = x(b, col_of_row[b])
  NodeId gather_cols(NodeId x, std::vector<int> col_of_row);

  // mean_b  w(b) * (1 - p(b))^gamma * (-log p(b)), p clamped to [floor, 1].
  NodeId cb_focal(NodeId p_true, Eigen::VectorXd weights, double gamma,
                  double floor = 1e-12);

  // scale * mean_b sum_i T(b,i) * (log T(b,i) - logq(b,i)).
  NodeId kl_to_const(Eigen::MatrixXd target, NodeId logq, double scale,
                     double floor = 1e-12);

  // For each row with include[b] != 0: sum over the k highest-similarity
  // columns among `candidate_cols` of max(s(b,i) - s(b, true_col[b]) + m, 0),
  // averaged over the included rows (0 if none). Ties by lowest column index.
  NodeId margin_hinge(NodeId sims, std::vector<int> true_col,
                      std::vector<char> include, std::vector<int> candidate_cols,
                      double m, int k);

  // sum_i coef_i * v_i over 1x1 nodes.
  NodeId weighted_sum(const std::vector<std::pair<double, NodeId>>& terms);

  // 3x3 convolution, stride 1, zero padding 1. w is (out_ch x in_ch*9),
  // b is (1 x out_ch) or kNone. Rows are CHW-flattened images.
  NodeId conv3x3(NodeId x, NodeId w, NodeId b, ImageShape in, int out_channels);

  // 2x2 average pooling; height and width must be even.
  NodeId avg_pool2(NodeId x, ImageShape in);

  const Eigen::MatrixXd& value(NodeId id) const { return nodes_[id].value; }
  bool needs_grad(NodeId id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and accumulates into bound parameters.
  void backward(NodeId root);

  static constexpr NodeId kNone = -1;

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;  // empty until touched
    bool needs_grad = false;
    std::function<void(Tape&, NodeId)> back;
  };

  NodeId push(Eigen::MatrixXd value, bool needs_grad,
              std::function<void(Tape&, NodeId)> back);
  Eigen::MatrixXd& grad_ref(NodeId id);
  void accumulate(NodeId id, const Eigen::MatrixXd& delta);

  std::vector<Node> nodes_;

  friend struct TapeTestAccess;
};

}  // namespace iclkit::ad
