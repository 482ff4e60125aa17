// Test-only oracles, kept independent of the library code paths they check.
#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <vector>

#include "iclkit/graph.hpp"

namespace oracles {

// Central finite differences over the given parameters against the analytic
// gradients left in Parameter::grad by eval(true). eval(false) must only
// return the loss value. Returns the relative error
// ||g_analytic - g_numeric|| / max(||g_analytic|| + ||g_numeric||, eps).
inline double finite_diff_error(const std::vector<iclkit::ad::Parameter*>& params,
                                const std::function<double(bool)>& eval,
                                double h = 1e-5) {
  for (auto* p : params) p->zero_grad();
  eval(true);
  std::vector<double> analytic, numeric;
  for (auto* p : params)
    for (Eigen::Index i = 0; i < p->grad.size(); ++i)
      analytic.push_back(p->grad.data()[i]);
  for (auto* p : params)
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double saved = p->value.data()[i];
      p->value.data()[i] = saved + h;
      double f1 = eval(false);
      p->value.data()[i] = saved - h;
      double f2 = eval(false);
      p->value.data()[i] = saved;
      numeric.push_back((f1 - f2) / (2.0 * h));
    }
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  diff = std::sqrt(diff);
  na = std::sqrt(na);
  nn = std::sqrt(nn);
  if (na + nn < 1e-10) return 0.0;
  return diff / std::max(na + nn, 1e-12);
}

// Naive greedy herding that recomputes the objective from scratch for every
// candidate at every iteration. min_gap, when given, receives the smallest
// margin between the chosen candidate and the runner-up across iterations;
// instances with a vanishing gap are argmin ties that float association may
// resolve either way, so tests skip them.
inline std::vector<int> herding_oracle(const Eigen::MatrixXd& features, int budget,
                                       double* min_gap = nullptr) {
  const int n = static_cast<int>(features.rows());
  const int take = std::min(budget, n);
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(features.cols());
  for (int i = 0; i < n; ++i) mean += features.row(i);
  mean /= n;

  if (min_gap) *min_gap = std::numeric_limits<double>::infinity();
  std::vector<int> selected;
  for (int j = 0; j < take; ++j) {
    int best = -1;
    double best_obj = std::numeric_limits<double>::infinity();
    double second_obj = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (std::find(selected.begin(), selected.end(), i) != selected.end()) continue;
      Eigen::RowVectorXd sum = features.row(i);
      for (int s : selected) sum += features.row(s);
      double obj = (mean - sum / (j + 1.0)).norm();
      if (obj < best_obj) {
        second_obj = best_obj;
        best_obj = obj;
        best = i;
      } else if (obj < second_obj) {
        second_obj = obj;
      }
    }
    if (min_gap && std::isfinite(second_obj))
      *min_gap = std::min(*min_gap, second_obj - best_obj);
    selected.push_back(best);
  }
  return selected;
}

// Direct-summation metric oracles over a dense lower-triangular matrix
// given as a[t][i] (0-based, i <= t).
inline double acc_oracle(const std::vector<std::vector<double>>& a) {
  double total = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    double inner = 0;
    for (std::size_t i = 0; i <= t; ++i) inner += a[t][i];
    total += inner / static_cast<double>(t + 1);
  }
  return total / static_cast<double>(a.size());
}

inline double fgt_oracle(const std::vector<std::vector<double>>& a) {
  double total = 0;
  for (std::size_t t = 1; t < a.size(); ++t) {
    double inner = 0;
    for (std::size_t i = 0; i < t; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t j = i; j < t; ++j) best = std::max(best, a[j][i]);
      inner += best - a[t][i];
    }
    total += inner / static_cast<double>(t);
  }
  return total / static_cast<double>(a.size());
}

inline double acc_new_oracle(const std::vector<std::vector<double>>& a) {
  double total = 0;
  for (std::size_t t = 0; t < a.size(); ++t) total += a[t][t];
  return total / static_cast<double>(a.size());
}

inline double acc_old_oracle(const std::vector<std::vector<double>>& a) {
  double total = 0;
  for (std::size_t t = 0; t < a.size(); ++t) total += a[t][0];
  return total / static_cast<double>(a.size());
}

}  // namespace oracles
