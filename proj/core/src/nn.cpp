#include "iclkit/nn.hpp"

#include <cmath>

namespace iclkit::nn {

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  raise(ErrorKind::config, "unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

Eigen::MatrixXd init_weights(int rows, int cols, int fan_in, int fan_out,
                             Activation act, std::mt19937_64& rng) {
  double stddev = act == Activation::relu ? std::sqrt(2.0 / fan_in)
                                          : std::sqrt(2.0 / (fan_in + fan_out));
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::MatrixXd w(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) w(r, c) = dist(rng);
  return w;
}

Stack::Stack(const std::vector<LayerSpec>& specs, InputSig input, bool bias,
             const std::string& name_prefix, std::mt19937_64& rng)
    : input_(input), prefix_(name_prefix), bias_(bias) {
  InputSig cur = input;
  int idx = 0;
  for (const LayerSpec& spec : specs) {
    Layer layer;
    layer.spec = spec;
    layer.in = cur;
    std::string base = prefix_ + "." + std::to_string(idx);
    switch (spec.kind) {
      case LayerSpec::Kind::dense: {
        int in_dim = cur.flat();
        layer.params.emplace_back(
            base + ".W", init_weights(spec.width, in_dim, in_dim, spec.width, spec.act, rng));
        if (bias_)
          layer.params.emplace_back(base + ".b", Eigen::MatrixXd::Zero(1, spec.width));
        cur = InputSig{false, spec.width, {}};
        break;
      }
      case LayerSpec::Kind::conv3x3: {
        require(cur.is_image, ErrorKind::config, "conv layer requires image input");
        int fan_in = cur.shape.channels * 9;
        layer.params.emplace_back(
            base + ".W", init_weights(spec.width, fan_in, fan_in, spec.width * 9, spec.act, rng));
        if (bias_)
          layer.params.emplace_back(base + ".b", Eigen::MatrixXd::Zero(1, spec.width));
        cur.shape.channels = spec.width;
        break;
      }
      case LayerSpec::Kind::avg_pool2: {
        require(cur.is_image, ErrorKind::config, "pool layer requires image input");
        require(cur.shape.height % 2 == 0 && cur.shape.width % 2 == 0, ErrorKind::config,
                "pool layer requires even spatial dims");
        cur.shape.height /= 2;
        cur.shape.width /= 2;
        break;
      }
      case LayerSpec::Kind::activation:
        break;
    }
    layer.out = cur;
    layers_.push_back(std::move(layer));
    ++idx;
  }
  output_ = cur;
}

template <typename Self, typename TapeRef>
ad::Tape::NodeId Stack::forward_impl(Self& self, TapeRef& t, ad::Tape::NodeId x) {
  ad::Tape::NodeId cur = x;
  for (auto& layer : self.layers_) {
    switch (layer.spec.kind) {
      case LayerSpec::Kind::dense: {
        ad::Tape::NodeId w = t.param(layer.params[0]);
        ad::Tape::NodeId b = layer.params.size() > 1 ? t.param(layer.params[1]) : ad::Tape::kNone;
        cur = t.linear(cur, w, b);
        break;
      }
      case LayerSpec::Kind::conv3x3: {
        ad::Tape::NodeId w = t.param(layer.params[0]);
        ad::Tape::NodeId b = layer.params.size() > 1 ? t.param(layer.params[1]) : ad::Tape::kNone;
        cur = t.conv3x3(cur, w, b, layer.in.shape, layer.spec.width);
        break;
      }
      case LayerSpec::Kind::avg_pool2:
        cur = t.avg_pool2(cur, layer.in.shape);
        break;
      case LayerSpec::Kind::activation:
        switch (layer.spec.act) {
          case Activation::tanh: cur = t.tanh_op(cur); break;
          case Activation::relu: cur = t.relu_op(cur); break;
          case Activation::identity: break;
        }
        break;
    }
  }
  return cur;
}

ad::Tape::NodeId Stack::forward(ad::Tape& t, ad::Tape::NodeId x) {
  return forward_impl(*this, t, x);
}

ad::Tape::NodeId Stack::forward(ad::Tape& t, ad::Tape::NodeId x) const {
  return forward_impl(*this, t, x);
}

std::vector<ad::Parameter*> Stack::params() {
  std::vector<ad::Parameter*> out;
  for (auto& l : layers_)
    for (auto& p : l.params) out.push_back(&p);
  return out;
}

std::vector<const ad::Parameter*> Stack::params() const {
  std::vector<const ad::Parameter*> out;
  for (const auto& l : layers_)
    for (const auto& p : l.params) out.push_back(&p);
  return out;
}

void Stack::set_trainable(bool trainable) {
  for (auto& l : layers_)
    for (auto& p : l.params) p.trainable = trainable;
}

void Stack::zero_grads() {
  for (auto& l : layers_)
    for (auto& p : l.params) p.zero_grad();
}

Stack Stack::clone_renamed(const std::string& new_prefix) const {
  Stack copy = *this;
  copy.prefix_ = new_prefix;
  for (std::size_t i = 0; i < copy.layers_.size(); ++i) {
    for (auto& p : copy.layers_[i].params) {
      std::string suffix = p.name.substr(prefix_.size());
      p.name = new_prefix + suffix;
    }
  }
  return copy;
}

}  // namespace iclkit::nn
