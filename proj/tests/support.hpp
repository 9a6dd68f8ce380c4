#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "apemkit/network.hpp"
#include "apemkit/rng.hpp"

namespace testing {

using namespace apemkit;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline void fill_normal(Tensor& t, Rng& rng, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  for (double& v : t.values()) v = n(rng);
}

struct NetSpec {
  bool with_bias = true;
  bool with_pool = true;
  bool with_conv = true;
};

/// Small random network: [conv -> relu -> (maxpool)] -> flatten -> dense ->
/// relu -> dense. Shapes and hyperparameters vary with the seed.
inline Network random_network(std::uint64_t seed, NetSpec spec = {}) {
  Rng rng = make_rng(seed, 7);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  const std::size_t channels = pick(1, 2);
  const std::size_t side = pick(6, 8);
  Shape shape{channels, side, side};
  std::vector<Layer> layers;
  std::size_t c = channels, h = side, w = side;
  if (spec.with_conv) {
    const std::size_t oc = pick(2, 3);
    const std::size_t k = pick(2, 3);
    const std::size_t pad = pick(0, 1);
    const std::size_t stride = pick(1, 2);
    Conv2dLayer conv = make_conv2d(c, oc, k, stride, pad);
    fill_normal(conv.weight, rng, 0.6);
    if (spec.with_bias) fill_normal(conv.bias, rng, 0.2);
    layers.emplace_back(conv);
    layers.emplace_back(ReluLayer{});
    h = (h + 2 * pad - k) / stride + 1;
    w = (w + 2 * pad - k) / stride + 1;
    c = oc;
    if (spec.with_pool && h >= 2 && w >= 2) {
      layers.emplace_back(MaxPool2dLayer{});
      h = (h - 2) / 2 + 1;
      w = (w - 2) / 2 + 1;
    }
  }
  layers.emplace_back(FlattenLayer{});
  const std::size_t flat = c * h * w;
  const std::size_t hidden = pick(3, 6);
  const std::size_t classes = pick(2, 4);
  DenseLayer d1 = make_dense(flat, hidden);
  fill_normal(d1.weight, rng, 0.6);
  DenseLayer d2 = make_dense(hidden, classes);
  fill_normal(d2.weight, rng, 0.6);
  if (spec.with_bias) {
    fill_normal(d1.bias, rng, 0.2);
    fill_normal(d2.bias, rng, 0.2);
  }
  layers.emplace_back(d1);
  layers.emplace_back(ReluLayer{});
  layers.emplace_back(d2);
  return Network(shape, layers);
}

// Straightforward loop implementations, written without reference to the
// library's kernels.

inline std::vector<double> naive_conv(const Conv2dLayer& L, const std::vector<double>& x,
                                      std::size_t c, std::size_t h, std::size_t w,
                                      std::size_t& oh, std::size_t& ow) {
  const std::size_t oc = L.weight.dim(0), k = L.weight.dim(2);
  const long pad = static_cast<long>(L.padding);
  oh = (h + 2 * L.padding - k) / L.stride + 1;
  ow = (w + 2 * L.padding - k) / L.stride + 1;
  std::vector<double> y(oc * oh * ow);
  for (std::size_t o = 0; o < oc; ++o)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double s = L.bias[o];
        for (std::size_t ci = 0; ci < c; ++ci)
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) {
              const long yy = static_cast<long>(i * L.stride + a) - pad;
              const long xx = static_cast<long>(j * L.stride + b) - pad;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
              s += L.weight[((o * c + ci) * k + a) * k + b] * x[(ci * h + yy) * w + xx];
            }
        y[(o * oh + i) * ow + j] = s;
      }
  return y;
}

/// Logits computed with plain loops.
inline std::vector<double> naive_logits(const Network& net, const Tensor& image) {
  std::vector<double> x(image.values().begin(), image.values().end());
  Shape s = image.shape();
  for (const auto& layer : net.layers()) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      const std::size_t out = d->weight.dim(0), in = d->weight.dim(1);
      std::vector<double> y(out);
      for (std::size_t o = 0; o < out; ++o) {
        double acc = d->bias[o];
        for (std::size_t i = 0; i < in; ++i) acc += d->weight[o * in + i] * x[i];
        y[o] = acc;
      }
      x = y;
      s = {out};
    } else if (const auto* cv = std::get_if<Conv2dLayer>(&layer)) {
      std::size_t oh = 0, ow = 0;
      x = naive_conv(*cv, x, s[0], s[1], s[2], oh, ow);
      s = {cv->weight.dim(0), oh, ow};
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      for (double& v : x) v = v > 0 ? v : 0.0;
    } else if (const auto* mp = std::get_if<MaxPool2dLayer>(&layer)) {
      const std::size_t c = s[0], h = s[1], w = s[2];
      const std::size_t oh = (h - mp->size) / mp->stride + 1, ow = (w - mp->size) / mp->stride + 1;
      std::vector<double> y(c * oh * ow);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) {
            double m = -INFINITY;
            for (std::size_t a = 0; a < mp->size; ++a)
              for (std::size_t b = 0; b < mp->size; ++b)
                m = std::max(m, x[(ch * h + i * mp->stride + a) * w + j * mp->stride + b]);
            y[(ch * oh + i) * ow + j] = m;
          }
      x = y;
      s = {c, oh, ow};
    } else {
      s = {x.size()};
    }
  }
  return x;
}

inline double naive_loss(const std::vector<double>& logits, std::size_t label) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  return -(logits[label] - m - std::log(z));
}

/// True when every relu input and maxpool choice is at least `margin` away
/// from switching, so finite differences with step below `margin` are valid.
inline bool locally_smooth(const Network& net, const Tensor& image, double margin) {
  const auto trace = forward_trace(net, image);
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const Tensor& in = trace[i];
    if (std::holds_alternative<ReluLayer>(net.layer(i))) {
      for (double v : in.values()) {
        if (std::abs(v) < margin) return false;
      }
    } else if (const auto* mp = std::get_if<MaxPool2dLayer>(&net.layer(i))) {
      const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
      const std::size_t oh = (h - mp->size) / mp->stride + 1, ow = (w - mp->size) / mp->stride + 1;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t x = 0; x < ow; ++x) {
            std::vector<double> window;
            for (std::size_t a = 0; a < mp->size; ++a)
              for (std::size_t b = 0; b < mp->size; ++b)
                window.push_back(in.at(ch, y * mp->stride + a, x * mp->stride + b));
            std::sort(window.rbegin(), window.rend());
            if (window[0] - window[1] < margin) return false;
          }
    }
  }
  return true;
}

/// Central differences of the loss computed by the naive evaluator.
inline Tensor numeric_loss_gradient(const Network& net, const Tensor& image, std::size_t label,
                                    double h) {
  Tensor g(image.shape());
  Tensor x = image;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = naive_loss(naive_logits(net, x), label);
    x[i] = orig - h;
    const double down = naive_loss(naive_logits(net, x), label);
    x[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double max_relative_error(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("apemkit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
