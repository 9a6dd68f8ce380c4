#include "apemkit/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "apemkit/error.hpp"
#include "layer_ops.hpp"

namespace apemkit {

DenseLayer make_dense(std::size_t in, std::size_t out) {
  return {Tensor(Shape{out, in}), Tensor(Shape{out})};
}

Conv2dLayer make_conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                        std::size_t stride, std::size_t padding) {
  return {Tensor(Shape{out_channels, in_channels, kernel, kernel}), Tensor(Shape{out_channels}),
          stride, padding};
}

std::string_view layer_kind(const Layer& layer) {
  static constexpr std::string_view kNames[] = {"dense", "conv2d", "relu", "maxpool2d", "flatten"};
  return kNames[layer.index()];
}

Network::Network(Shape input_shape, std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("network has no layers");
  if (!std::holds_alternative<DenseLayer>(layers_.back())) {
    throw ShapeError("final layer must be dense, got " + std::string(layer_kind(layers_.back())));
  }
  for (auto d : input_shape) {
    if (d == 0) throw ShapeError("input shape has a zero dimension");
  }
  shapes_.push_back(std::move(input_shape));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      shapes_.push_back(detail::output_shape(layers_[i], shapes_.back()));
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" + std::string(layer_kind(layers_[i])) +
                       "): " + e.what());
    }
    if (const auto* d = std::get_if<DenseLayer>(&layers_[i])) {
      require_finite(d->weight, "dense weight");
      require_finite(d->bias, "dense bias");
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layers_[i])) {
      require_finite(c->weight, "conv2d weight");
      require_finite(c->bias, "conv2d bias");
    }
  }
}

std::optional<std::size_t> Network::last_conv_index() const {
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (std::holds_alternative<Conv2dLayer>(layers_[i])) return i;
  }
  return std::nullopt;
}

Prediction make_prediction(Tensor logits) {
  require_finite(logits, "logits");
  Prediction p;
  const double peak = *std::max_element(logits.values().begin(), logits.values().end());
  p.probabilities = Tensor(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p.probabilities[i] = std::exp(logits[i] - peak);
    total += p.probabilities[i];
  }
  for (double& v : p.probabilities.values()) v /= total;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (p.probabilities[i] > p.probabilities[p.predicted_class]) p.predicted_class = i;
  }
  p.confidence = p.probabilities[p.predicted_class];
  p.logits = std::move(logits);
  return p;
}

std::vector<Tensor> forward_trace(const Network& net, const Tensor& image) {
  if (image.shape() != net.input_shape()) {
    throw ShapeError("input shape " + shape_string(image.shape()) + " does not match network input " +
                     shape_string(net.input_shape()));
  }
  std::vector<Tensor> trace;
  trace.reserve(net.num_layers() + 1);
  trace.push_back(image);
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    trace.push_back(detail::layer_forward(net.layer(i), trace.back(), net.layer_output_shape(i)));
  }
  return trace;
}

Prediction forward(const Network& net, const Tensor& image) {
  auto trace = forward_trace(net, image);
  return make_prediction(std::move(trace.back()));
}

double loss(const Prediction& pred, std::size_t label) {
  if (label >= pred.probabilities.size()) {
    throw InvalidArgument("label " + std::to_string(label) + " out of range for " +
                          std::to_string(pred.probabilities.size()) + " classes");
  }
  const double p = pred.probabilities[label];
  if (p > 0.0) {
    const double l = -std::log(p);
    return l > 0.0 ? l : 0.0;
  }
  // p underflowed: fall back to log-sum-exp on the logits
  const auto z = pred.logits.values();
  const double peak = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - peak);
  return peak + std::log(s) - z[label];
}

Tensor backpropagate(const Network& net, std::span<const Tensor> trace, std::size_t begin,
                     std::size_t end, Tensor grad, ReluBackward mode) {
  if (trace.size() != net.num_layers() + 1 || begin > end || end > net.num_layers()) {
    throw InvalidArgument("backpropagate: inconsistent trace or layer range");
  }
  for (std::size_t i = end; i-- > begin;) {
    grad = detail::layer_backward(net.layer(i), trace[i], std::move(grad), mode);
  }
  return grad;
}

namespace {

Tensor loss_gradient(const Network& net, const Tensor& image, std::size_t label,
                     ReluBackward mode) {
  if (label >= net.num_classes()) {
    throw InvalidArgument("label " + std::to_string(label) + " out of range for " +
                          std::to_string(net.num_classes()) + " classes");
  }
  const auto trace = forward_trace(net, image);
  const auto pred = make_prediction(trace.back());
  Tensor g = pred.probabilities;
  g[label] -= 1.0;
  auto grad = backpropagate(net, trace, 0, net.num_layers(), std::move(g), mode);
  require_finite(grad, "input gradient");
  return grad;
}

}  // namespace

Tensor input_gradient(const Network& net, const Tensor& image, std::size_t label) {
  return loss_gradient(net, image, label, ReluBackward::Standard);
}

Tensor guided_input_gradient(const Network& net, const Tensor& image, std::size_t label) {
  return loss_gradient(net, image, label, ReluBackward::Guided);
}

FeatureMapGradient activation_gradient(const Network& net, const Tensor& image,
                                       std::size_t class_index, std::size_t layer_index) {
  if (layer_index >= net.num_layers()) {
    throw InvalidArgument("layer index " + std::to_string(layer_index) + " out of range");
  }
  if (class_index >= net.num_classes()) {
    throw InvalidArgument("class " + std::to_string(class_index) + " out of range");
  }
  auto trace = forward_trace(net, image);
  Tensor seed(Shape{net.num_classes()});
  seed[class_index] = 1.0;
  auto grad = backpropagate(net, trace, layer_index + 1, net.num_layers(), std::move(seed));
  return {std::move(trace[layer_index + 1]), std::move(grad)};
}

FeatureMapGradient feature_map_gradient(const Network& net, const Tensor& image,
                                        std::size_t class_index, std::size_t layer_index) {
  if (layer_index >= net.num_layers() ||
      !std::holds_alternative<Conv2dLayer>(net.layer(layer_index))) {
    throw InvalidArgument("layer " + std::to_string(layer_index) + " is not a conv2d layer");
  }
  return activation_gradient(net, image, class_index, layer_index);
}

}  // namespace apemkit
