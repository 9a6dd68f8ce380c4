#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "apemkit/dataset.hpp"
#include "apemkit/network.hpp"

namespace apemkit {

struct TrainOptions {
  std::size_t epochs = 3;
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
};

struct TrainReport {
  std::vector<double> epoch_mean_loss;
};

/// Mini-batch SGD on cross-entropy. Deterministic for a given seed; the
/// input network is left untouched.
Network train(Network net, std::span<const Sample> samples, const TrainOptions& options,
              TrainReport* report = nullptr);

/// Fraction of samples whose predicted class equals the label.
double accuracy(const Network& net, std::span<const Sample> samples);

/// He-normal weights, zero biases.
void initialize_parameters(Network& net, std::uint64_t seed);

/// conv5x5(8) -> relu -> maxpool2 -> conv3x3(16) -> relu -> maxpool2 -> flatten -> dense.
/// Expects (channels, H, W) input with H, W divisible by 4.
Network make_desk_cnn(const Shape& input_shape, std::size_t num_classes, std::uint64_t seed);

}  // namespace apemkit
