#include "apemkit/train.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "apemkit/error.hpp"
#include "apemkit/rng.hpp"
#include "layer_ops.hpp"

namespace apemkit {
namespace {

struct ParamGrads {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;
};

ParamGrads zero_grads(const Network& net) {
  ParamGrads g;
  for (const auto& layer : net.layers()) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      g.weight.emplace_back(d->weight.shape());
      g.bias.emplace_back(d->bias.shape());
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
      g.weight.emplace_back(c->weight.shape());
      g.bias.emplace_back(c->bias.shape());
    } else {
      g.weight.emplace_back();
      g.bias.emplace_back();
    }
  }
  return g;
}

// Returns the sample loss and accumulates parameter gradients into `grads`.
double accumulate_sample(const Network& net, const Sample& s, ParamGrads& grads) {
  const auto trace = forward_trace(net, s.image);
  const auto pred = make_prediction(trace.back());
  const double l = loss(pred, s.label);
  Tensor g = pred.probabilities;
  g[s.label] -= 1.0;
  for (std::size_t i = net.num_layers(); i-- > 0;) {
    const Layer& layer = net.layer(i);
    if (!grads.weight[i].empty()) {
      detail::layer_parameter_gradients(layer, trace[i], g, grads.weight[i], grads.bias[i]);
    }
    if (i > 0) g = detail::layer_backward(layer, trace[i], std::move(g), ReluBackward::Standard);
  }
  return l;
}

void apply_update(Network& net, ParamGrads& grads, double step) {
  auto& layers = net.mutable_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Tensor* w = nullptr;
    Tensor* b = nullptr;
    if (auto* d = std::get_if<DenseLayer>(&layers[i])) {
      w = &d->weight;
      b = &d->bias;
    } else if (auto* c = std::get_if<Conv2dLayer>(&layers[i])) {
      w = &c->weight;
      b = &c->bias;
    } else {
      continue;
    }
    for (std::size_t k = 0; k < w->size(); ++k) {
      (*w)[k] -= step * grads.weight[i][k];
      grads.weight[i][k] = 0.0;
    }
    for (std::size_t k = 0; k < b->size(); ++k) {
      (*b)[k] -= step * grads.bias[i][k];
      grads.bias[i][k] = 0.0;
    }
  }
}

}  // namespace

Network train(Network net, std::span<const Sample> samples, const TrainOptions& options,
              TrainReport* report) {
  if (samples.empty()) throw InvalidArgument("train: dataset is empty");
  if (options.batch_size == 0) throw InvalidArgument("train: batch size must be positive");
  if (!(options.learning_rate > 0.0)) throw InvalidArgument("train: learning rate must be positive");

  ParamGrads grads = zero_grads(net);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(options.seed, epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }

    double total = 0.0;
    std::size_t in_batch = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const Sample& s = samples[order[k]];
      const auto diverged = [&](const std::string& what) {
        return NumericError("train: " + what + " at epoch " + std::to_string(epoch) + ", sample " +
                            std::to_string(s.id) + " (learning rate " +
                            std::to_string(options.learning_rate) + ")");
      };
      double l = 0.0;
      try {
        l = accumulate_sample(net, s, grads);
      } catch (const NumericError& e) {
        throw diverged(e.what());
      }
      if (!std::isfinite(l)) throw diverged("non-finite loss");
      total += l;
      if (++in_batch == options.batch_size || k + 1 == order.size()) {
        apply_update(net, grads, options.learning_rate / static_cast<double>(in_batch));
        in_batch = 0;
      }
    }
    if (report != nullptr) report->epoch_mean_loss.push_back(total / static_cast<double>(order.size()));
  }
  return net;
}

double accuracy(const Network& net, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples) {
    if (forward(net, s.image).predicted_class == s.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

void initialize_parameters(Network& net, std::uint64_t seed) {
  auto& layers = net.mutable_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Rng rng = make_rng(seed, i);
    auto fill = [&](Tensor& w, Tensor& b, std::size_t fan_in) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (double& v : w.values()) v = dist(rng);
      for (double& v : b.values()) v = 0.0;
    };
    if (auto* d = std::get_if<DenseLayer>(&layers[i])) {
      fill(d->weight, d->bias, d->weight.dim(1));
    } else if (auto* c = std::get_if<Conv2dLayer>(&layers[i])) {
      fill(c->weight, c->bias, c->weight.dim(1) * c->weight.dim(2) * c->weight.dim(3));
    }
  }
}

Network make_desk_cnn(const Shape& input_shape, std::size_t num_classes, std::uint64_t seed) {
  if (input_shape.size() != 3 || input_shape[1] % 4 != 0 || input_shape[2] % 4 != 0) {
    throw ShapeError("desk CNN expects (C, H, W) with H and W divisible by 4, got " +
                     shape_string(input_shape));
  }
  const std::size_t flat = 16 * (input_shape[1] / 4) * (input_shape[2] / 4);
  Network net(input_shape, {make_conv2d(input_shape[0], 8, 5, 1, 2), ReluLayer{},
                            MaxPool2dLayer{2, 2}, make_conv2d(8, 16, 3, 1, 1), ReluLayer{},
                            MaxPool2dLayer{2, 2}, FlattenLayer{}, make_dense(flat, num_classes)});
  initialize_parameters(net, seed);
  return net;
}

}  // namespace apemkit
