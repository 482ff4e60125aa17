#pragma once

#include <string>
#include <vector>

#include "iclkit/data.hpp"
#include "iclkit/model.hpp"

namespace iclkit {

// Lower-triangular record A[i][t]: accuracy on class group Y_i under the
// model after step t (1-based i <= t). Stored as entries[t-1][i-1].
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;

  void append_step(const std::vector<double>& group_accuracies);
  double at(int group, int step) const;  // 1-based, group <= step
  int steps() const { return static_cast<int>(rows_.size()); }
  bool complete() const;

  std::string to_csv() const;
  static AccuracyMatrix from_csv(const std::string& text);

  const std::vector<std::vector<double>>& rows() const { return rows_; }

 private:
  std::vector<std::vector<double>> rows_;
};

// Evaluates the step-t model on every seen group's test set and appends the
// row; predictions range over seen classes only.
void record(AccuracyMatrix& matrix, const ExpandingModel& model,
            const IncrementalStream& stream);

// Acc = (1/T) sum_t [ (1/t) sum_{i<=t} A[i][t] ]
double overall_acc(const AccuracyMatrix& matrix);

// Fgt = (1/T) sum_t [ (1/(t-1)) sum_{i<t} max_{j<t} (A[i][j] - A[i][t]) ],
// with the t=1 term defined as 0.
double forgetting(const AccuracyMatrix& matrix);

// Acc_new = (1/T) sum_t A[t][t];  Acc_old = (1/T) sum_t A[1][t]
std::pair<double, double> acc_new_old(const AccuracyMatrix& matrix);

}  // namespace iclkit
