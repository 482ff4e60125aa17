#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "iclkit/graph.hpp"

namespace iclkit::nn {

enum class Activation { tanh, relu, identity };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

struct LayerSpec {
  enum class Kind { dense, conv3x3, avg_pool2, activation };
  Kind kind;
  int width = 0;  // dense output dim / conv output channels
  Activation act = Activation::tanh;
};

// Input signature of a stack: either a flat vector or a CHW image.
struct InputSig {
  bool is_image = false;
  int dim = 0;
  ad::ImageShape shape{};
  int flat() const { return is_image ? shape.pixels() : dim; }
};

// A sequence of layers with owned parameters. Forward passes are built on a
// Tape; the non-const overload binds parameters as gradient leaves, the const
// one as read-only constants.
class Stack {
 public:
  Stack() = default;
  Stack(const std::vector<LayerSpec>& specs, InputSig input, bool bias,
        const std::string& name_prefix, std::mt19937_64& rng);

  ad::Tape::NodeId forward(ad::Tape& t, ad::Tape::NodeId x);
  ad::Tape::NodeId forward(ad::Tape& t, ad::Tape::NodeId x) const;

  std::vector<ad::Parameter*> params();
  std::vector<const ad::Parameter*> params() const;
  void set_trainable(bool trainable);
  void zero_grads();

  // Deep copy with parameters renamed under a new prefix (warm starts).
  Stack clone_renamed(const std::string& new_prefix) const;

  const InputSig& input() const { return input_; }
  const InputSig& output() const { return output_; }
  const std::string& prefix() const { return prefix_; }
  bool empty() const { return layers_.empty(); }

 private:
  struct Layer {
    LayerSpec spec;
    InputSig in;
    InputSig out;
    std::vector<ad::Parameter> params;  // dense/conv: W [, b]
  };

  template <typename Self, typename TapeRef>
  static ad::Tape::NodeId forward_impl(Self& self, TapeRef& t, ad::Tape::NodeId x);

  std::vector<Layer> layers_;
  InputSig input_{};
  InputSig output_{};
  std::string prefix_;
  bool bias_ = true;
};

// Fills a matrix with activation-appropriate random initial values.
Eigen::MatrixXd init_weights(int rows, int cols, int fan_in, int fan_out,
                             Activation act, std::mt19937_64& rng);

}  // namespace iclkit::nn
