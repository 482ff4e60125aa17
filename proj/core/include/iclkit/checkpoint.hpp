#pragma once

#include <string>
#include <vector>

#include "iclkit/model.hpp"

namespace iclkit {

inline constexpr const char* kCheckpointMagic = "ICLKIT-CKPT-v1";

// Byte-exact serialization of parameter names, shapes, and values; used for
// the freezing-contract comparisons.
std::string serialize_values(const std::vector<const ad::Parameter*>& params);

inline std::string serialize_values(const std::vector<ad::Parameter*>& params) {
  return serialize_values(
      std::vector<const ad::Parameter*>(params.begin(), params.end()));
}

void save_checkpoint(const ExpandingModel& model, const std::string& path);
ExpandingModel load_checkpoint(const std::string& path);

// Copies every checkpoint parameter whose name and shape match into the
// model (warm-starting a fresh model from stored weights). Returns the
// number of parameters copied.
int apply_initial_weights(ExpandingModel& model, const std::string& path);

}  // namespace iclkit
