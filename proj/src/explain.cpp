#include "apemkit/explain.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "apemkit/error.hpp"
#include "apemkit/rng.hpp"
#include "layer_ops.hpp"

namespace apemkit {
namespace {

constexpr std::string_view kMethodNames[] = {"gradient", "smoothgrad",      "lrp",
                                             "guided_backprop", "gradcam", "guided_gradcam"};

void require_label(const Network& net, const Sample& s) {
  if (s.label >= net.num_classes()) {
    throw InvalidArgument("class " + std::to_string(s.label) + " out of range for " +
                          std::to_string(net.num_classes()) + " classes");
  }
}

Tensor absolute(Tensor t) {
  for (double& v : t.values()) v = std::abs(v);
  return t;
}

double stabilized(double z, double epsilon) {
  const double sign = z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0);
  return z + epsilon * sign;
}

// R / (z + eps * sign(z)), with 0 where the denominator vanishes.
Tensor relevance_ratio(const Tensor& relevance, const Tensor& z, double epsilon) {
  Tensor s(relevance.shape());
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double denom = stabilized(z[j], epsilon);
    s[j] = denom != 0.0 ? relevance[j] / denom : 0.0;
  }
  return s;
}

}  // namespace

std::string_view method_name(Method m) { return kMethodNames[static_cast<std::size_t>(m)]; }

std::optional<Method> parse_method(std::string_view name) {
  for (auto m : kAllMethods) {
    if (method_name(m) == name) return m;
  }
  return std::nullopt;
}

RawAttribution gradient_map(const Network& net, const Sample& sample) {
  require_label(net, sample);
  return {absolute(input_gradient(net, sample.image, sample.label)), Method::Gradient, {}};
}

RawAttribution smoothgrad_map(const Network& net, const Sample& sample, std::size_t n,
                              double sigma, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("smoothgrad: n must be at least 1");
  if (!(sigma >= 0.0)) throw InvalidArgument("smoothgrad: sigma must be non-negative");
  require_label(net, sample);

  Rng rng = make_rng(seed, sample.id);
  std::normal_distribution<double> noise(0.0, 1.0);
  Tensor mean(sample.image.shape());
  Tensor noisy(sample.image.shape());
  for (std::size_t k = 1; k <= n; ++k) {
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      noisy[i] = sample.image[i] + sigma * noise(rng);
    }
    const Tensor g = input_gradient(net, noisy, sample.label);
    // running mean: identical maps average to exactly themselves
    const double w = 1.0 / static_cast<double>(k);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (std::abs(g[i]) - mean[i]) * w;
  }
  return {std::move(mean),
          Method::SmoothGrad,
          {{"n", static_cast<double>(n)}, {"sigma", sigma}, {"seed", static_cast<double>(seed)}}};
}

std::vector<Tensor> lrp_relevances(const Network& net, const Tensor& image,
                                   std::size_t class_index, double epsilon) {
  if (!(epsilon >= 0.0)) throw InvalidArgument("lrp: epsilon must be non-negative");
  if (class_index >= net.num_classes()) {
    throw InvalidArgument("lrp: class " + std::to_string(class_index) + " out of range");
  }
  const auto trace = forward_trace(net, image);
  std::vector<Tensor> rel(trace.size());
  rel.back() = Tensor(trace.back().shape());
  rel.back()[class_index] = trace.back()[class_index];

  for (std::size_t i = net.num_layers(); i-- > 0;) {
    const Layer& layer = net.layer(i);
    const Tensor& a = trace[i];
    const Tensor& z = trace[i + 1];
    const Tensor& r = rel[i + 1];
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      Tensor back = detail::dense_transpose(*d, relevance_ratio(r, z, epsilon));
      for (std::size_t k = 0; k < back.size(); ++k) back[k] *= a[k];
      rel[i] = std::move(back);
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
      Tensor back = detail::conv_transpose(*c, a.shape(), relevance_ratio(r, z, epsilon));
      for (std::size_t k = 0; k < back.size(); ++k) back[k] *= a[k];
      rel[i] = std::move(back);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      Tensor back = r;
      for (std::size_t k = 0; k < back.size(); ++k) {
        if (!(a[k] > 0.0)) back[k] = 0.0;
      }
      rel[i] = std::move(back);
    } else if (const auto* p = std::get_if<MaxPool2dLayer>(&layer)) {
      const auto idx = detail::maxpool_argmax(*p, a, z.shape());
      Tensor back(a.shape());
      for (std::size_t o = 0; o < idx.size(); ++o) back[idx[o]] += r[o];
      rel[i] = std::move(back);
    } else {
      rel[i] = r.reshaped(a.shape());
    }
  }
  return rel;
}

RawAttribution lrp_epsilon_map(const Network& net, const Sample& sample, double epsilon) {
  require_label(net, sample);
  auto rel = lrp_relevances(net, sample.image, sample.label, epsilon);
  require_finite(rel.front(), "lrp relevance");
  return {std::move(rel.front()), Method::Lrp, {{"epsilon", epsilon}}};
}

RawAttribution guided_backprop_map(const Network& net, const Sample& sample) {
  require_label(net, sample);
  return {absolute(guided_input_gradient(net, sample.image, sample.label)),
          Method::GuidedBackprop,
          {}};
}

Tensor gradcam_coarse(const Network& net, const Tensor& image, std::size_t class_index) {
  const auto conv = net.last_conv_index();
  if (!conv) throw MethodInapplicable("gradcam: network has no conv2d layer");
  std::size_t unit = *conv;
  if (unit + 1 < net.num_layers() && std::holds_alternative<ReluLayer>(net.layer(unit + 1))) {
    ++unit;
  }
  const auto fm = activation_gradient(net, image, class_index, unit);
  const std::size_t k = fm.activations.dim(0), h = fm.activations.dim(1), w = fm.activations.dim(2);
  Tensor cam(Shape{h, w});
  for (std::size_t c = 0; c < k; ++c) {
    double weight = 0.0;
    for (std::size_t p = 0; p < h * w; ++p) weight += fm.gradient[c * h * w + p];
    weight /= static_cast<double>(h * w);
    for (std::size_t p = 0; p < h * w; ++p) cam[p] += weight * fm.activations[c * h * w + p];
  }
  for (double& v : cam.values()) v = std::max(v, 0.0);
  return cam;
}

RawAttribution gradcam_map(const Network& net, const Sample& sample) {
  require_label(net, sample);
  const Shape& in = net.input_shape();
  if (in.size() != 3) throw MethodInapplicable("gradcam: input is not an image");
  const Tensor up = bilinear_resize(gradcam_coarse(net, sample.image, sample.label), in[1], in[2]);
  Tensor out(in);
  for (std::size_t c = 0; c < in[0]; ++c) {
    std::copy(up.values().begin(), up.values().end(), out.values().begin() + c * in[1] * in[2]);
  }
  return {std::move(out), Method::GradCam, {}};
}

RawAttribution guided_gradcam_map(const Network& net, const Sample& sample) {
  auto cam = gradcam_map(net, sample);
  const auto guided = guided_backprop_map(net, sample);
  for (std::size_t i = 0; i < cam.values.size(); ++i) cam.values[i] *= guided.values[i];
  cam.method = Method::GuidedGradCam;
  return cam;
}

RawAttribution explain(Method method, const Network& net, const Sample& sample,
                       const MethodParams& params) {
  switch (method) {
    case Method::Gradient:
      return gradient_map(net, sample);
    case Method::SmoothGrad:
      return smoothgrad_map(net, sample, params.smooth_n, params.smooth_sigma, params.seed);
    case Method::Lrp:
      return lrp_epsilon_map(net, sample, params.lrp_epsilon);
    case Method::GuidedBackprop:
      return guided_backprop_map(net, sample);
    case Method::GradCam:
      return gradcam_map(net, sample);
    case Method::GuidedGradCam:
      return guided_gradcam_map(net, sample);
  }
  throw InvalidArgument("unknown explanation method");
}

Tensor bilinear_resize(const Tensor& grid, std::size_t out_h, std::size_t out_w) {
  if (grid.rank() != 2) throw ShapeError("bilinear_resize expects a (h, w) grid");
  const std::size_t h = grid.dim(0), w = grid.dim(1);
  Tensor out(Shape{out_h, out_w});
  auto source = [](std::size_t dst, std::size_t in_len, std::size_t out_len, std::size_t& i0,
                   std::size_t& i1, double& frac) {
    double pos = (static_cast<double>(dst) + 0.5) * static_cast<double>(in_len) /
                     static_cast<double>(out_len) -
                 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(in_len - 1));
    i0 = static_cast<std::size_t>(std::floor(pos));
    i1 = std::min(i0 + 1, in_len - 1);
    frac = pos - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double fy;
    source(y, h, out_h, y0, y1, fy);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double fx;
      source(x, w, out_w, x0, x1, fx);
      const double top = grid[y0 * w + x0] + (grid[y0 * w + x1] - grid[y0 * w + x0]) * fx;
      const double bottom = grid[y1 * w + x0] + (grid[y1 * w + x1] - grid[y1 * w + x0]) * fx;
      out[y * out_w + x] = top + (bottom - top) * fy;
    }
  }
  return out;
}

}  // namespace apemkit
