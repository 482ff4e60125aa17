#include "iclkit/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace iclkit::ad {

Tape::NodeId Tape::push(Eigen::MatrixXd value, bool needs_grad,
                        std::function<void(Tape&, NodeId)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Eigen::MatrixXd& Tape::grad_ref(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(NodeId id, const Eigen::MatrixXd& delta) {
  if (id == kNone || !nodes_[id].needs_grad) return;
  grad_ref(id) += delta;
}

Tape::NodeId Tape::constant(Eigen::MatrixXd v) {
  return push(std::move(v), false, nullptr);
}

Tape::NodeId Tape::param(Parameter& p) {
  Parameter* bound = &p;
  return push(p.value, p.trainable, [bound](Tape& t, NodeId id) {
    bound->grad += t.nodes_[id].grad;
  });
}

Tape::NodeId Tape::param(const Parameter& p) { return constant(p.value); }

Tape::NodeId Tape::linear(NodeId x, NodeId w, NodeId b) {
  const Eigen::MatrixXd& X = nodes_[x].value;
  const Eigen::MatrixXd& W = nodes_[w].value;
  require(X.cols() == W.cols(), ErrorKind::shape,
          "linear: input width " + std::to_string(X.cols()) +
              " != weight fan-in " + std::to_string(W.cols()));
  Eigen::MatrixXd Y = X * W.transpose();
  if (b != kNone) {
    const Eigen::MatrixXd& B = nodes_[b].value;
    require(B.rows() == 1 && B.cols() == W.rows(), ErrorKind::shape, "linear: bias shape");
    Y.rowwise() += B.row(0);
  }
  bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad ||
            (b != kNone && nodes_[b].needs_grad);
  if (!ng) return push(std::move(Y), false, nullptr);
  return push(std::move(Y), true, [x, w, b](Tape& t, NodeId id) {
    const Eigen::MatrixXd& G = t.nodes_[id].grad;
    if (t.nodes_[x].needs_grad) t.grad_ref(x) += G * t.nodes_[w].value;
    if (t.nodes_[w].needs_grad) t.grad_ref(w) += G.transpose() * t.nodes_[x].value;
    if (b != kNone && t.nodes_[b].needs_grad) t.grad_ref(b) += G.colwise().sum();
  });
}

Tape::NodeId Tape::tanh_op(NodeId x) {
  Eigen::MatrixXd Y = nodes_[x].value.array().tanh();
  if (!nodes_[x].needs_grad) return push(std::move(Y), false, nullptr);
  return push(std::move(Y), true, [x](Tape& t, NodeId id) {
    const Eigen::MatrixXd& Y = t.nodes_[id].value;
    t.grad_ref(x).array() += t.nodes_[id].grad.array() * (1.0 - Y.array().square());
  });
}

Tape::NodeId Tape::relu_op(NodeId x) {
  Eigen::MatrixXd Y = nodes_[x].value.cwiseMax(0.0);
  if (!nodes_[x].needs_grad) return push(std::move(Y), false, nullptr);
  return push(std::move(Y), true, [x](Tape& t, NodeId id) {
    const Eigen::MatrixXd& X = t.nodes_[x].value;
    t.grad_ref(x).array() +=
        t.nodes_[id].grad.array() * (X.array() > 0.0).cast<double>();
  });
}

Tape::NodeId Tape::exp_op(NodeId x) {
  Eigen::MatrixXd Y = nodes_[x].value.array().exp();
  if (!nodes_[x].needs_grad) return push(std::move(Y), false, nullptr);
  return push(std::move(Y), true, [x](Tape& t, NodeId id) {
    t.grad_ref(x).array() += t.nodes_[id].grad.array() * t.nodes_[id].value.array();
  });
}

Tape::NodeId Tape::concat_cols(const std::vector<NodeId>& xs) {
  require(!xs.empty(), ErrorKind::contract, "concat_cols: empty list");
  Eigen::Index rows = nodes_[xs[0]].value.rows();
  Eigen::Index cols = 0;
  bool ng = false;
  for (NodeId x : xs) {
    require(nodes_[x].value.rows() == rows, ErrorKind::shape, "concat_cols: row mismatch");
    cols += nodes_[x].value.cols();
    ng = ng || nodes_[x].needs_grad;
  }
  Eigen::MatrixXd Y(rows, cols);
  Eigen::Index at = 0;
  for (NodeId x : xs) {
    Y.middleCols(at, nodes_[x].value.cols()) = nodes_[x].value;
    at += nodes_[x].value.cols();
  }
  if (!ng) return push(std::move(Y), false, nullptr);
  std::vector<NodeId> parents = xs;
  return push(std::move(Y), true, [parents](Tape& t, NodeId id) {
    Eigen::Index at = 0;
    for (NodeId x : parents) {
      Eigen::Index w = t.nodes_[x].value.cols();
      if (t.nodes_[x].needs_grad) t.grad_ref(x) += t.nodes_[id].grad.middleCols(at, w);
      at += w;
    }
  });
}

Tape::NodeId Tape::concat_rows(const std::vector<NodeId>& xs) {
  require(!xs.empty(), ErrorKind::contract, "concat_rows: empty list");
  Eigen::Index cols = nodes_[xs[0]].value.cols();
  Eigen::Index rows = 0;
  bool ng = false;
  for (NodeId x : xs) {
    require(nodes_[x].value.cols() == cols, ErrorKind::shape, "concat_rows: col mismatch");
    rows += nodes_[x].value.rows();
    ng = ng || nodes_[x].needs_grad;
  }
  Eigen::MatrixXd Y(rows, cols);
  Eigen::Index at = 0;
  for (NodeId x : xs) {
    Y.middleRows(at, nodes_[x].value.rows()) = nodes_[x].value;
    at += nodes_[x].value.rows();
  }
  if (!ng) return push(std::move(Y), false, nullptr);
  std::vector<NodeId> parents = xs;
  return push(std::move(Y), true, [parents](Tape& t, NodeId id) {
    Eigen::Index at = 0;
    for (NodeId x : parents) {
      Eigen::Index h = t.nodes_[x].value.rows();
      if (t.nodes_[x].needs_grad) t.grad_ref(x) += t.nodes_[id].grad.middleRows(at, h);
      at += h;
    }
  });
}

Tape::NodeId Tape::row_cosine(NodeId z, NodeId w, double eps) {
  const Eigen::MatrixXd& Z = nodes_[z].value;
  const Eigen::MatrixXd& W = nodes_[w].value;
  require(Z.cols() == W.cols(), ErrorKind::shape,
          "row_cosine: feature dim " + std::to_string(Z.cols()) + " vs " +
              std::to_string(W.cols()));
  Eigen::VectorXd zn = Z.rowwise().norm().cwiseMax(eps);
  Eigen::VectorXd wn = W.rowwise().norm().cwiseMax(eps);
  Eigen::MatrixXd S = (Z * W.transpose());
  S.array().colwise() /= zn.array();
  S.array().rowwise() /= wn.transpose().array();
  bool ng = nodes_[z].needs_grad || nodes_[w].needs_grad;
  if (!ng) return push(std::move(S), false, nullptr);
  return push(std::move(S), true, [z, w, eps](Tape& t, NodeId id) {
    const Eigen::MatrixXd& Z = t.nodes_[z].value;
    const Eigen::MatrixXd& W = t.nodes_[w].value;
    const Eigen::MatrixXd& S = t.nodes_[id].value;
    const Eigen::MatrixXd& G = t.nodes_[id].grad;
    Eigen::VectorXd zn = Z.rowwise().norm().cwiseMax(eps);
    Eigen::VectorXd wn = W.rowwise().norm().cwiseMax(eps);
    // ds/dz_b = w_c/(|z||w|) - s * z_b/|z|^2   (norm treated constant when clamped)
    if (t.nodes_[z].needs_grad) {
      Eigen::MatrixXd& GZ = t.grad_ref(z);
      Eigen::MatrixXd Gn = G.array().rowwise() / wn.transpose().array();  // G/(|w_c|)
      GZ += ((Gn * W).array().colwise() / zn.array()).matrix();
      Eigen::VectorXd coef = (G.array() * S.array()).rowwise().sum();  // sum_c g*s
      for (Eigen::Index b = 0; b < Z.rows(); ++b) {
        if (Z.row(b).norm() > eps)
          GZ.row(b) -= coef(b) / (zn(b) * zn(b)) * Z.row(b);
      }
    }
    if (t.nodes_[w].needs_grad) {
      Eigen::MatrixXd& GW = t.grad_ref(w);
      Eigen::MatrixXd Gn = G.array().colwise() / zn.array();  // G/(|z_b|)
      GW += ((Gn.transpose() * Z).array().colwise() / wn.array()).matrix();
      Eigen::VectorXd coef = (G.array() * S.array()).colwise().sum();  // sum_b g*s
      for (Eigen::Index c = 0; c < W.rows(); ++c) {
        if (W.row(c).norm() > eps)
          GW.row(c) -= coef(c) / (wn(c) * wn(c)) * W.row(c);
      }
    }
  });
}

Tape::NodeId Tape::scale(NodeId x, NodeId s) {
  require(nodes_[s].value.rows() == 1 && nodes_[s].value.cols() == 1,
          ErrorKind::shape, "scale: scalar node must be 1x1");
  double sv = nodes_[s].value(0, 0);
  Eigen::MatrixXd Y = sv * nodes_[x].value;
  bool ng = nodes_[x].needs_grad || nodes_[s].needs_grad;
  if (!ng) return push(std::move(Y), false, nullptr);
  return push(std::move(Y), true, [x, s](Tape& t, NodeId id) {
    const Eigen::MatrixXd& G = t.nodes_[id].grad;
    double sv = t.nodes_[s].value(0, 0);
    if (t.nodes_[x].needs_grad) t.grad_ref(x) += sv * G;
    if (t.nodes_[s].needs_grad)
      t.grad_ref(s)(0, 0) += (G.array() * t.nodes_[x].value.array()).sum();
  });
}

Tape::NodeId Tape::log_softmax_cols(NodeId x, std::vector<int> cols) {
  const Eigen::MatrixXd& X = nodes_[x].value;
  require(!cols.empty(), ErrorKind::contract, "log_softmax_cols: empty column set");
  for (int c : cols)
    require(c >= 0 && c < X.cols(), ErrorKind::contract, "log_softmax_cols: column out of range");
  Eigen::MatrixXd S(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) S.col(j) = X.col(cols[j]);
  Eigen::VectorXd mx = S.rowwise().maxCoeff();
  Eigen::MatrixXd shifted = S.array().colwise() - mx.array();
  Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix() + mx;
  Eigen::MatrixXd L = S.array().colwise() - lse.array();
  if (!nodes_[x].needs_grad) return push(std::move(L), false, nullptr);
  return push(std::move(L), true, [x, cols](Tape& t, NodeId id) {
    const Eigen::MatrixXd& L = t.nodes_[id].value;
    const Eigen::MatrixXd& G = t.nodes_[id].grad;
    Eigen::VectorXd gsum = G.rowwise().sum();
    Eigen::MatrixXd GX = G.array() - (L.array().exp().colwise() * gsum.array());
    Eigen::MatrixXd& dst = t.grad_ref(x);
    for (std::size_t j = 0; j < cols.size(); ++j) dst.col(cols[j]) += GX.col(j);
  });
}

Tape::NodeId Tape::gather_cols(NodeId x, std::vector<int> col_of_row) {
  const Eigen::MatrixXd& X = nodes_[x].value;
  require(static_cast<Eigen::Index>(col_of_row.size()) == X.rows(), ErrorKind::shape,
          "gather_cols: one column index per row required");
  Eigen::MatrixXd Y(X.rows(), 1);
  for (Eigen::Index b = 0; b < X.rows(); ++b) {
    int c = col_of_row[b];
    require(c >= 0 && c < X.cols(), ErrorKind::contract, "gather_cols: column out of range");
    Y(b, 0) = X(b, c);
  }
  if (!nodes_[x].needs_grad) return push(std::move(Y), false, nullptr);
  return push(std::move(Y), true, [x, col_of_row](Tape& t, NodeId id) {
    Eigen::MatrixXd& dst = t.grad_ref(x);
    const Eigen::MatrixXd& G = t.nodes_[id].grad;
    for (Eigen::Index b = 0; b < G.rows(); ++b) dst(b, col_of_row[b]) += G(b, 0);
  });
}

Tape::NodeId Tape::cb_focal(NodeId p_true, Eigen::VectorXd weights, double gamma,
                            double floor) {
  const Eigen::MatrixXd& P = nodes_[p_true].value;
  require(P.cols() == 1, ErrorKind::shape, "cb_focal: expected column of probabilities");
  require(weights.size() == P.rows(), ErrorKind::contract, "cb_focal: one weight per sample");
  const double B = static_cast<double>(P.rows());
  double acc = 0.0;
  for (Eigen::Index b = 0; b < P.rows(); ++b) {
    double p = std::min(P(b, 0), 1.0);
    double pc = std::max(p, floor);
    double u = std::max(1.0 - p, 0.0);
    acc += weights(b) * std::pow(u, gamma) * (-std::log(pc));
  }
  Eigen::MatrixXd Y(1, 1);
  Y(0, 0) = acc / B;
  if (!nodes_[p_true].needs_grad) return push(std::move(Y), false, nullptr);
  return push(std::move(Y), true, [p_true, weights, gamma, floor](Tape& t, NodeId id) {
    const Eigen::MatrixXd& P = t.nodes_[p_true].value;
    const double g = t.nodes_[id].grad(0, 0);
    const double B = static_cast<double>(P.rows());
    Eigen::MatrixXd& dst = t.grad_ref(p_true);
    for (Eigen::Index b = 0; b < P.rows(); ++b) {
      double p = std::min(P(b, 0), 1.0);
      double pc = std::max(p, floor);
      double u = std::max(1.0 - p, 0.0);
      double powg = std::pow(u, gamma);
      double powg1 = gamma == 0.0 ? 0.0 : (gamma == 1.0 ? 1.0 : std::pow(u, gamma - 1.0));
      double d = gamma * powg1 * std::log(pc) - powg / pc;
      dst(b, 0) += g * weights(b) * d / B;
    }
  });
}

Tape::NodeId Tape::kl_to_const(Eigen::MatrixXd target, NodeId logq, double scale,
                               double floor) {
  const Eigen::MatrixXd& LQ = nodes_[logq].value;
  require(target.rows() == LQ.rows() && target.cols() == LQ.cols(), ErrorKind::shape,
          "kl_to_const: shape mismatch");
  const double B = static_cast<double>(LQ.rows());
  double acc = 0.0;
  for (Eigen::Index b = 0; b < LQ.rows(); ++b)
    for (Eigen::Index i = 0; i < LQ.cols(); ++i) {
      double tv = target(b, i);
      if (tv <= 0.0) continue;  // 0 log 0 = 0
      acc += tv * (std::log(std::max(tv, floor)) - LQ(b, i));
    }
  Eigen::MatrixXd Y(1, 1);
  Y(0, 0) = scale * acc / B;
  if (!nodes_[logq].needs_grad) return push(std::move(Y), false, nullptr);
  return push(std::move(Y), true, [logq, target, scale](Tape& t, NodeId id) {
    const double g = t.nodes_[id].grad(0, 0);
    const double B = static_cast<double>(target.rows());
    t.grad_ref(logq) -= (g * scale / B) * target;
  });
}

Tape::NodeId Tape::margin_hinge(NodeId sims, std::vector<int> true_col,
                                std::vector<char> include,
                                std::vector<int> candidate_cols, double m, int k) {
  const Eigen::MatrixXd& S = nodes_[sims].value;
  require(static_cast<Eigen::Index>(true_col.size()) == S.rows() &&
              static_cast<Eigen::Index>(include.size()) == S.rows(),
          ErrorKind::shape, "margin_hinge: per-row metadata size mismatch");
  require(k >= 1, ErrorKind::contract, "margin_hinge: k must be >= 1");
  require(k <= static_cast<int>(candidate_cols.size()), ErrorKind::contract,
          "margin_hinge: k exceeds candidate class count");

  // Per included row: the k candidate columns with highest similarity,
  // ties broken by lowest column index.
  std::vector<std::vector<int>> picked(S.rows());
  int n_included = 0;
  for (Eigen::Index b = 0; b < S.rows(); ++b) {
    if (!include[b]) continue;
    ++n_included;
    std::vector<int> order = candidate_cols;
    std::stable_sort(order.begin(), order.end(), [&](int a, int c) {
      if (S(b, a) != S(b, c)) return S(b, a) > S(b, c);
      return a < c;
    });
    order.resize(k);
    picked[b] = std::move(order);
  }
  Eigen::MatrixXd Y(1, 1);
  double acc = 0.0;
  for (Eigen::Index b = 0; b < S.rows(); ++b)
    for (int c : picked[b]) acc += std::max(S(b, c) - S(b, true_col[b]) + m, 0.0);
  Y(0, 0) = n_included > 0 ? acc / n_included : 0.0;
  if (!nodes_[sims].needs_grad || n_included == 0)
    return push(std::move(Y), false, nullptr);
  return push(std::move(Y), true,
              [sims, true_col, picked, m, n_included](Tape& t, NodeId id) {
                const Eigen::MatrixXd& S = t.nodes_[sims].value;
                const double g = t.nodes_[id].grad(0, 0) / n_included;
                Eigen::MatrixXd& dst = t.grad_ref(sims);
                for (Eigen::Index b = 0; b < S.rows(); ++b)
                  for (int c : picked[b])
                    if (S(b, c) - S(b, true_col[b]) + m > 0.0) {
                      dst(b, c) += g;
                      dst(b, true_col[b]) -= g;
                    }
              });
}

Tape::NodeId Tape::weighted_sum(const std::vector<std::pair<double, NodeId>>& terms) {
  require(!terms.empty(), ErrorKind::contract, "weighted_sum: empty term list");
  double acc = 0.0;
  bool ng = false;
  for (auto& [c, n] : terms) {
    require(nodes_[n].value.size() == 1, ErrorKind::shape, "weighted_sum: non-scalar term");
    acc += c * nodes_[n].value(0, 0);
    ng = ng || nodes_[n].needs_grad;
  }
  Eigen::MatrixXd Y(1, 1);
  Y(0, 0) = acc;
  if (!ng) return push(std::move(Y), false, nullptr);
  auto ts = terms;
  return push(std::move(Y), true, [ts](Tape& t, NodeId id) {
    const double g = t.nodes_[id].grad(0, 0);
    for (auto& [c, n] : ts)
      if (t.nodes_[n].needs_grad) t.grad_ref(n)(0, 0) += c * g;
  });
}

namespace {
inline int pix(const ImageShape& s, int c, int y, int x) {
  return c * s.height * s.width + y * s.width + x;
}
}  // namespace

Tape::NodeId Tape::conv3x3(NodeId x, NodeId w, NodeId b, ImageShape in, int out_channels) {
  const Eigen::MatrixXd& X = nodes_[x].value;
  const Eigen::MatrixXd& W = nodes_[w].value;
  require(X.cols() == in.pixels(), ErrorKind::shape, "conv3x3: input row width");
  require(W.rows() == out_channels && W.cols() == in.channels * 9, ErrorKind::shape,
          "conv3x3: weight shape");
  ImageShape out{out_channels, in.height, in.width};
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(X.rows(), out.pixels());
  for (Eigen::Index s = 0; s < X.rows(); ++s)
    for (int oc = 0; oc < out_channels; ++oc)
      for (int y = 0; y < in.height; ++y)
        for (int xx = 0; xx < in.width; ++xx) {
          double acc = b != kNone ? nodes_[b].value(0, oc) : 0.0;
          for (int ic = 0; ic < in.channels; ++ic)
            for (int ky = 0; ky < 3; ++ky) {
              int iy = y + ky - 1;
              if (iy < 0 || iy >= in.height) continue;
              for (int kx = 0; kx < 3; ++kx) {
                int ix = xx + kx - 1;
                if (ix < 0 || ix >= in.width) continue;
                acc += W(oc, ic * 9 + ky * 3 + kx) * X(s, pix(in, ic, iy, ix));
              }
            }
          Y(s, pix(out, oc, y, xx)) = acc;
        }
  bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad ||
            (b != kNone && nodes_[b].needs_grad);
  if (!ng) return push(std::move(Y), false, nullptr);
  return push(std::move(Y), true, [x, w, b, in, out_channels](Tape& t, NodeId id) {
    const Eigen::MatrixXd& X = t.nodes_[x].value;
    const Eigen::MatrixXd& W = t.nodes_[w].value;
    const Eigen::MatrixXd& G = t.nodes_[id].grad;
    ImageShape out{out_channels, in.height, in.width};
    bool nx = t.nodes_[x].needs_grad;
    bool nw = t.nodes_[w].needs_grad;
    bool nb = b != kNone && t.nodes_[b].needs_grad;
    for (Eigen::Index s = 0; s < X.rows(); ++s)
      for (int oc = 0; oc < out_channels; ++oc)
        for (int y = 0; y < in.height; ++y)
          for (int xx = 0; xx < in.width; ++xx) {
            double g = G(s, pix(out, oc, y, xx));
            if (g == 0.0) continue;
            if (nb) t.grad_ref(b)(0, oc) += g;
            for (int ic = 0; ic < in.channels; ++ic)
              for (int ky = 0; ky < 3; ++ky) {
                int iy = y + ky - 1;
                if (iy < 0 || iy >= in.height) continue;
                for (int kx = 0; kx < 3; ++kx) {
                  int ix = xx + kx - 1;
                  if (ix < 0 || ix >= in.width) continue;
                  if (nx)
                    t.grad_ref(x)(s, pix(in, ic, iy, ix)) +=
                        g * W(oc, ic * 9 + ky * 3 + kx);
                  if (nw)
                    t.grad_ref(w)(oc, ic * 9 + ky * 3 + kx) +=
                        g * X(s, pix(in, ic, iy, ix));
                }
              }
          }
  });
}

Tape::NodeId Tape::avg_pool2(NodeId x, ImageShape in) {
  require(in.height % 2 == 0 && in.width % 2 == 0, ErrorKind::shape,
          "avg_pool2: spatial dims must be even");
  const Eigen::MatrixXd& X = nodes_[x].value;
  require(X.cols() == in.pixels(), ErrorKind::shape, "avg_pool2: input row width");
  ImageShape out{in.channels, in.height / 2, in.width / 2};
  Eigen::MatrixXd Y(X.rows(), out.pixels());
  for (Eigen::Index s = 0; s < X.rows(); ++s)
    for (int c = 0; c < in.channels; ++c)
      for (int y = 0; y < out.height; ++y)
        for (int xx = 0; xx < out.width; ++xx)
          Y(s, pix(out, c, y, xx)) =
              0.25 * (X(s, pix(in, c, 2 * y, 2 * xx)) + X(s, pix(in, c, 2 * y, 2 * xx + 1)) +
                      X(s, pix(in, c, 2 * y + 1, 2 * xx)) +
                      X(s, pix(in, c, 2 * y + 1, 2 * xx + 1)));
  if (!nodes_[x].needs_grad) return push(std::move(Y), false, nullptr);
  return push(std::move(Y), true, [x, in](Tape& t, NodeId id) {
    const Eigen::MatrixXd& G = t.nodes_[id].grad;
    ImageShape out{in.channels, in.height / 2, in.width / 2};
    Eigen::MatrixXd& dst = t.grad_ref(x);
    for (Eigen::Index s = 0; s < G.rows(); ++s)
      for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y < out.height; ++y)
          for (int xx = 0; xx < out.width; ++xx) {
            double g = 0.25 * G(s, pix(out, c, y, xx));
            dst(s, pix(in, c, 2 * y, 2 * xx)) += g;
            dst(s, pix(in, c, 2 * y, 2 * xx + 1)) += g;
            dst(s, pix(in, c, 2 * y + 1, 2 * xx)) += g;
            dst(s, pix(in, c, 2 * y + 1, 2 * xx + 1)) += g;
          }
  });
}

void Tape::backward(NodeId root) {
  require(root >= 0 && root < static_cast<NodeId>(nodes_.size()), ErrorKind::contract,
          "backward: bad root");
  require(nodes_[root].value.size() == 1, ErrorKind::contract,
          "backward: root must be scalar");
  if (!nodes_[root].needs_grad) return;  // nothing trainable feeds the root
  grad_ref(root)(0, 0) += 1.0;
  for (NodeId id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0 || !n.back) continue;
    n.back(*this, id);
  }
}

}  // namespace iclkit::ad
