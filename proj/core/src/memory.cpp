#include "iclkit/memory.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace iclkit {

std::vector<int> herding_select(const Eigen::MatrixXd& features, int budget) {
  require(features.rows() >= 1, ErrorKind::contract, "herding over an empty feature set");
  require(budget >= 1, ErrorKind::contract, "herding budget must be >= 1");
  const int n = static_cast<int>(features.rows());
  const int take = std::min(budget, n);
  Eigen::RowVectorXd mean = features.colwise().mean();

  std::vector<int> order;
  std::vector<char> used(n, 0);
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(features.cols());
  for (int j = 0; j < take; ++j) {
    int best = -1;
    double best_obj = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      double obj = (mean - (sum + features.row(i)) / (j + 1.0)).norm();
      if (obj < best_obj) {  // strict: ties keep the lowest index
        best_obj = obj;
        best = i;
      }
    }
    used[best] = 1;
    order.push_back(best);
    sum += features.row(best);
  }
  return order;
}

ExemplarMemory::ExemplarMemory(int budget) : budget_(budget) {
  require(budget >= 1, ErrorKind::contract, "memory budget must be >= 1");
}

int ExemplarMemory::total_size() const {
  int n = 0;
  for (auto& [_, v] : by_class_) n += static_cast<int>(v.size());
  return n;
}

std::vector<int> ExemplarMemory::stored_classes() const {
  std::vector<int> out;
  for (auto& [label, _] : by_class_) out.push_back(label);
  return out;
}

const std::vector<StoredSample>& ExemplarMemory::exemplars(int label) const {
  auto it = by_class_.find(label);
  require(it != by_class_.end(), ErrorKind::contract,
          "no exemplars stored for class " + std::to_string(label));
  return it->second;
}

void ExemplarMemory::replace_class(int label, std::vector<StoredSample> chosen) {
  require(static_cast<int>(chosen.size()) <= budget_, ErrorKind::contract,
          "exemplar list exceeds the budget");
  for (const auto& s : chosen)
    require(s.label == label, ErrorKind::stream_contract,
            "exemplar label does not match its class list");
  by_class_[label] = std::move(chosen);
}

ExemplarMemory rebuild_memory(const Snapshot& model, const std::vector<CandidatePool>& pools,
                              int budget) {
  ExemplarMemory memory(budget);
  std::set<int> seen_labels;
  for (const auto& pool : pools) {
    require(!seen_labels.count(pool.label), ErrorKind::contract,
            "duplicate candidate pool for class " + std::to_string(pool.label));
    seen_labels.insert(pool.label);
    require(!pool.samples.empty(), ErrorKind::contract,
            "class " + std::to_string(pool.label) + " has no candidate samples");

    Eigen::MatrixXd x(pool.samples.size(), pool.samples[0].x.size());
    for (std::size_t i = 0; i < pool.samples.size(); ++i)
      x.row(static_cast<Eigen::Index>(i)) = pool.samples[i].x.transpose();
    Eigen::MatrixXd features = model.forward_features(x);

    std::vector<StoredSample> chosen;
    for (int idx : herding_select(features, budget)) chosen.push_back(pool.samples[idx]);
    memory.replace_class(pool.label, std::move(chosen));
  }
  return memory;
}

TrainingSet build_training_set(const ExemplarMemory& memory,
                               const std::vector<StoredSample>& incoming) {
  std::set<int> incoming_labels;
  for (const auto& s : incoming) incoming_labels.insert(s.label);
  for (int label : memory.stored_classes())
    require(!incoming_labels.count(label), ErrorKind::stream_contract,
            "memory and incoming data share class " + std::to_string(label));

  TrainingSet out;
  for (const auto& [label, list] : memory.by_class())
    for (const auto& s : list) {
      out.samples.push_back(s);
      out.is_memory.push_back(1);
      out.counts.add(label);
    }
  for (const auto& s : incoming) {
    out.samples.push_back(s);
    out.is_memory.push_back(0);
    out.counts.add(s.label);
  }
  return out;
}

}  // namespace iclkit
