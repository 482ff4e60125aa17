#pragma once

#include <map>
#include <vector>

#include "iclkit/losses.hpp"
#include "iclkit/model.hpp"

namespace iclkit {

struct Provenance {
  int step = 0;      // incremental step whose data pool the sample came from
  int index = 0;     // index within that pool
};

struct StoredSample {
  Eigen::VectorXd x;
  int label = 0;
  Provenance origin;
};

// Greedy herding: returns the selection order of up to `budget` sample
// indices keeping the running selection mean closest (L2) to the class mean.
// Ties break toward the lowest index.
std::vector<int> herding_select(const Eigen::MatrixXd& features, int budget);

// Fixed-budget per-class exemplar store. Lists keep herding order, so any
// prefix is itself a valid smaller-budget selection.
class ExemplarMemory {
 public:
  explicit ExemplarMemory(int budget = 20);

  int budget() const { return budget_; }
  bool empty() const { return by_class_.empty(); }
  int total_size() const;
  std::vector<int> stored_classes() const;
  const std::vector<StoredSample>& exemplars(int label) const;

  void replace_class(int label, std::vector<StoredSample> chosen);

  const std::map<int, std::vector<StoredSample>>& by_class() const { return by_class_; }

 private:
  int budget_;
  std::map<int, std::vector<StoredSample>> by_class_;
};

// One class's candidate pool for memory construction.
struct CandidatePool {
  int label = 0;
  std::vector<StoredSample> samples;
};

// Reselects every class's exemplars by herding in the feature space of the
// given (frozen) model. Old classes may only offer what memory already holds;
// the most recent step's classes offer their full dataset pool.
ExemplarMemory rebuild_memory(const Snapshot& model, const std::vector<CandidatePool>& pools,
                              int budget);

// S_t = M_{t-1} union D_t, with per-class counts and memory tags.
struct TrainingSet {
  std::vector<StoredSample> samples;
  std::vector<char> is_memory;
  ClassCounts counts;
};

TrainingSet build_training_set(const ExemplarMemory& memory,
                               const std::vector<StoredSample>& incoming);

}  // namespace iclkit
