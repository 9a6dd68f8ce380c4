#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "apemkit/dataset.hpp"
#include "apemkit/network.hpp"

namespace apemkit {

enum class Method {
  Gradient,
  SmoothGrad,
  Lrp,
  GuidedBackprop,
  GradCam,
  GuidedGradCam,
};

inline constexpr Method kAllMethods[] = {Method::Gradient,       Method::SmoothGrad,
                                         Method::Lrp,            Method::GuidedBackprop,
                                         Method::GradCam,        Method::GuidedGradCam};

/// "gradient", "smoothgrad", "lrp", "guided_backprop", "gradcam", "guided_gradcam".
std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);

struct MethodParams {
  std::size_t smooth_n = 100;
  double smooth_sigma = 0.2;
  std::uint64_t seed = 0;
  double lrp_epsilon = 1.0;
};

/// Per-pixel scores with the full input shape (all channels).
struct RawAttribution {
  Tensor values;
  Method method = Method::Gradient;
  std::map<std::string, double> params;
};

// Every method explains the class sample.label. Callers evaluating a model's
// own decision pass the predicted class as the label.

/// |dJ/dx| elementwise.
RawAttribution gradient_map(const Network& net, const Sample& sample);

/// Mean of |dJ/dx| over n copies of the image with i.i.d. N(0, sigma^2)
/// pixel noise. The noise stream is keyed by (seed, sample.id).
RawAttribution smoothgrad_map(const Network& net, const Sample& sample, std::size_t n,
                              double sigma, std::uint64_t seed);

/// Relevance at every layer boundary under the LRP epsilon rule:
/// result[i] is the relevance of trace[i]. result.back() holds the logit of
/// `class_index` at that class and zero elsewhere.
std::vector<Tensor> lrp_relevances(const Network& net, const Tensor& image,
                                   std::size_t class_index, double epsilon);

RawAttribution lrp_epsilon_map(const Network& net, const Sample& sample, double epsilon);

/// |guided dJ/dx| elementwise.
RawAttribution guided_backprop_map(const Network& net, const Sample& sample);

/// Class activation map on the last convolutional unit (the conv layer, or
/// the relu directly after it), shape (h, w), before upsampling.
Tensor gradcam_coarse(const Network& net, const Tensor& image, std::size_t class_index);

RawAttribution gradcam_map(const Network& net, const Sample& sample);

RawAttribution guided_gradcam_map(const Network& net, const Sample& sample);

RawAttribution explain(Method method, const Network& net, const Sample& sample,
                       const MethodParams& params);

/// Bilinear resize of a (h, w) grid to (out_h, out_w) with half-pixel centres.
Tensor bilinear_resize(const Tensor& grid, std::size_t out_h, std::size_t out_w);

}  // namespace apemkit
