#include "iclkit/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace iclkit {

void AccuracyMatrix::append_step(const std::vector<double>& group_accuracies) {
  require(group_accuracies.size() == rows_.size() + 1, ErrorKind::contract,
          "step " + std::to_string(rows_.size() + 1) + " needs exactly " +
              std::to_string(rows_.size() + 1) + " group accuracies");
  for (double a : group_accuracies)
    require(a >= 0.0 && a <= 1.0, ErrorKind::contract, "accuracy outside [0,1]");
  rows_.push_back(group_accuracies);
}

double AccuracyMatrix::at(int group, int step) const {
  require(step >= 1 && step <= steps() && group >= 1 && group <= step,
          ErrorKind::contract, "accuracy matrix index out of the lower triangle");
  return rows_[step - 1][group - 1];
}

bool AccuracyMatrix::complete() const {
  if (rows_.empty()) return false;
  for (std::size_t t = 0; t < rows_.size(); ++t)
    if (rows_[t].size() != t + 1) return false;
  return true;
}

std::string AccuracyMatrix::to_csv() const {
  // rows = class groups i, columns = steps t, upper triangle left empty
  std::ostringstream out;
  out << "group";
  for (int t = 1; t <= steps(); ++t) out << ",step" << t;
  out << "\n";
  char buf[64];
  for (int i = 1; i <= steps(); ++i) {
    out << i;
    for (int t = 1; t <= steps(); ++t) {
      out << ",";
      if (i <= t) {
        std::snprintf(buf, sizeof buf, "%.17g", at(i, t));
        out << buf;
      }
    }
    out << "\n";
  }
  return out.str();
}

AccuracyMatrix AccuracyMatrix::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::io, "empty matrix file");
  std::vector<std::vector<double>> by_group;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      if (first) {
        first = false;
        continue;
      }
      if (!cell.empty()) vals.push_back(std::stod(cell));
    }
    by_group.push_back(vals);
  }
  AccuracyMatrix m;
  const int steps = static_cast<int>(by_group.size());
  for (int i = 1; i <= steps; ++i)
    require(static_cast<int>(by_group[i - 1].size()) == steps - i + 1, ErrorKind::io,
            "malformed accuracy matrix");
  for (int t = 1; t <= steps; ++t) {
    std::vector<double> row;
    // group i's stored values run over steps i..T in order
    for (int i = 1; i <= t; ++i) row.push_back(by_group[i - 1][t - i]);
    m.append_step(row);
  }
  return m;
}

void record(AccuracyMatrix& matrix, const ExpandingModel& model,
            const IncrementalStream& stream) {
  const int t = model.step_index();
  require(t == matrix.steps() + 1, ErrorKind::contract,
          "matrix already holds " + std::to_string(matrix.steps()) + " steps");
  require(t <= stream.total_steps(), ErrorKind::contract,
          "model is ahead of the stream");
  std::vector<double> row;
  for (int i = 0; i < t; ++i) {
    auto tests = stream.test_of_classes(stream.steps[i].classes);
    require(!tests.empty(), ErrorKind::contract,
            "empty test set for group " + std::to_string(i + 1));
    Eigen::MatrixXd x(tests.size(), tests[0]->x.size());
    for (std::size_t b = 0; b < tests.size(); ++b) x.row(b) = tests[b]->x.transpose();
    std::vector<int> pred = model.predict(x);
    int hits = 0;
    for (std::size_t b = 0; b < tests.size(); ++b)
      if (pred[b] == tests[b]->label) ++hits;
    row.push_back(static_cast<double>(hits) / tests.size());
  }
  matrix.append_step(row);
}

double overall_acc(const AccuracyMatrix& matrix) {
  require(matrix.complete(), ErrorKind::contract, "accuracy matrix is incomplete");
  const int T = matrix.steps();
  double acc = 0.0;
  for (int t = 1; t <= T; ++t) {
    double inner = 0.0;
    for (int i = 1; i <= t; ++i) inner += matrix.at(i, t);
    acc += inner / t;
  }
  return acc / T;
}

double forgetting(const AccuracyMatrix& matrix) {
  require(matrix.complete(), ErrorKind::contract, "accuracy matrix is incomplete");
  const int T = matrix.steps();
  double fgt = 0.0;
  for (int t = 2; t <= T; ++t) {
    double inner = 0.0;
    for (int i = 1; i < t; ++i) {
      double peak = -1.0;
      for (int j = i; j < t; ++j) peak = std::max(peak, matrix.at(i, j));
      inner += peak - matrix.at(i, t);
    }
    fgt += inner / (t - 1);
  }
  return fgt / T;  // the t=1 term contributes 0
}

std::pair<double, double> acc_new_old(const AccuracyMatrix& matrix) {
  require(matrix.complete(), ErrorKind::contract, "accuracy matrix is incomplete");
  const int T = matrix.steps();
  double acc_new = 0.0, acc_old = 0.0;
  for (int t = 1; t <= T; ++t) {
    acc_new += matrix.at(t, t);
    acc_old += matrix.at(1, t);
  }
  return {acc_new / T, acc_old / T};
}

}  // namespace iclkit
