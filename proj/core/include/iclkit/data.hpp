#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "iclkit/memory.hpp"
#include "iclkit/nn.hpp"

namespace iclkit {

struct Dataset {
  nn::InputSig input;
  std::vector<Eigen::VectorXd> xs;
  std::vector<int> ys;
  std::vector<std::string> class_names;  // optional, index = label

  int size() const { return static_cast<int>(xs.size()); }
  std::vector<int> distinct_labels() const;
  std::map<int, int> class_counts() const;
};

// Synthetic stand-in for a skewed-distribution dataset: Gaussian clusters in
// feature space or procedurally textured small grayscale images.
struct SkewSpec {
  std::vector<double> proportions;  // must sum to 1 within 1e-9
  int total_samples = 8000;
  bool image_mode = false;
  int feature_dim = 16;
  ad::ImageShape image_shape{1, 16, 16};
  double difficulty = 0.65;  // 0 = well separated, 1 = heavy overlap
  int min_per_class = 21;   // memory budget + 1 by default

  void validate() const;
  // Largest-remainder allocation of total_samples to classes.
  std::vector<int> class_counts() const;
};

Dataset generate_skewed(const SkewSpec& spec, std::uint64_t seed);

struct Protocol {
  int initial_classes = 4;
  int per_step = 1;
};

struct StepData {
  std::vector<int> classes;          // Y_t
  std::vector<StoredSample> train;   // D_t
};

struct IncrementalStream {
  nn::InputSig input;
  std::vector<StepData> steps;
  std::map<int, std::vector<StoredSample>> test_by_class;
  std::vector<int> class_order;
  Protocol protocol;
  std::uint64_t class_order_seed = 0;

  int total_steps() const { return static_cast<int>(steps.size()); }
  std::vector<const StoredSample*> test_of_classes(const std::vector<int>& classes) const;
};

inline constexpr std::uint64_t kDefaultSplitSeed = 0x5eed0517ULL;

IncrementalStream make_stream(const Dataset& data, int initial_classes, int per_step,
                              std::uint64_t class_order_seed, double test_fraction = 0.2,
                              std::uint64_t split_seed = kDefaultSplitSeed);

// Deterministic pieces of the augmentation, exposed for direct use.
Eigen::VectorXd flip_horizontal(const Eigen::VectorXd& x, const ad::ImageShape& shape);
// Shifts the image by (dy, dx) with zero fill; (0,0) is the identity.
Eigen::VectorXd shift_image(const Eigen::VectorXd& x, const ad::ImageShape& shape, int dy,
                            int dx);

// Random horizontal flip (p = 0.5) plus random crop with 10% zero padding.
// Vector samples pass through unchanged.
Eigen::VectorXd augment(const Eigen::VectorXd& x, const nn::InputSig& input,
                        std::mt19937_64& rng);

struct IngestFormat {
  enum class Kind { image_folders, delimited_table };
  Kind kind = Kind::delimited_table;
  std::string label_column = "label";
  char delimiter = ',';
};

// Reads a directory of per-class image folders (PGM/PPM) or a delimited table
// with a label column.
Dataset ingest(const std::string& path, const IngestFormat& format);

}  // namespace iclkit
