#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "apemkit/tensor.hpp"

namespace apemkit {

/// Fully connected layer. weight is (out, in), bias is (out).
struct DenseLayer {
  Tensor weight;
  Tensor bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// 2-D convolution with zero padding. weight is (out_ch, in_ch, k, k).
struct Conv2dLayer {
  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  friend bool operator==(const Conv2dLayer&, const Conv2dLayer&) = default;
};

struct ReluLayer {
  friend bool operator==(ReluLayer, ReluLayer) = default;
};

struct MaxPool2dLayer {
  std::size_t size = 2;
  std::size_t stride = 2;

  friend bool operator==(const MaxPool2dLayer&, const MaxPool2dLayer&) = default;
};

struct FlattenLayer {
  friend bool operator==(FlattenLayer, FlattenLayer) = default;
};

using Layer = std::variant<DenseLayer, Conv2dLayer, ReluLayer, MaxPool2dLayer, FlattenLayer>;

DenseLayer make_dense(std::size_t in, std::size_t out);
Conv2dLayer make_conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                        std::size_t stride = 1, std::size_t padding = 0);

/// "dense", "conv2d", "relu", "maxpool2d" or "flatten".
std::string_view layer_kind(const Layer& layer);

/// An ordered stack of layers whose shapes are checked at construction.
/// The final layer must be dense; its output size is the class count.
class Network {
 public:
  Network(Shape input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const noexcept { return shapes_.front(); }
  /// Shape entering layer i.
  const Shape& layer_input_shape(std::size_t i) const { return shapes_.at(i); }
  /// Shape leaving layer i.
  const Shape& layer_output_shape(std::size_t i) const { return shapes_.at(i + 1); }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::size_t num_classes() const noexcept { return shapes_.back().front(); }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }

  /// Parameter access for the trainer. Callers must not change tensor shapes.
  std::vector<Layer>& mutable_layers() noexcept { return layers_; }

  std::optional<std::size_t> last_conv_index() const;

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

struct Prediction {
  Tensor logits;
  Tensor probabilities;
  std::size_t predicted_class = 0;
  double confidence = 0.0;
};

/// Softmax with max subtraction; ties resolve to the lowest class index.
Prediction make_prediction(Tensor logits);

/// Activations at every layer boundary: result[0] is the input,
/// result[i + 1] the output of layer i.
std::vector<Tensor> forward_trace(const Network& net, const Tensor& image);

Prediction forward(const Network& net, const Tensor& image);

/// Cross-entropy -ln p[label].
double loss(const Prediction& pred, std::size_t label);

enum class ReluBackward {
  Standard,
  /// Also drop negative backward signals at every relu.
  Guided,
};

/// Backpropagates `grad`, taken w.r.t. trace[end], through layers
/// end - 1 ... begin and returns the gradient w.r.t. trace[begin].
Tensor backpropagate(const Network& net, std::span<const Tensor> trace, std::size_t begin,
                     std::size_t end, Tensor grad, ReluBackward mode = ReluBackward::Standard);

/// dJ/dx of the cross-entropy loss for `label`.
Tensor input_gradient(const Network& net, const Tensor& image, std::size_t label);

Tensor guided_input_gradient(const Network& net, const Tensor& image, std::size_t label);

struct FeatureMapGradient {
  Tensor activations;
  Tensor gradient;
};

/// Output of layer `layer_index` and the derivative of logit[class_index]
/// with respect to it. Works for any layer.
FeatureMapGradient activation_gradient(const Network& net, const Tensor& image,
                                       std::size_t class_index, std::size_t layer_index);

/// As activation_gradient, restricted to conv2d layers.
FeatureMapGradient feature_map_gradient(const Network& net, const Tensor& image,
                                        std::size_t class_index, std::size_t layer_index);

}  // namespace apemkit
