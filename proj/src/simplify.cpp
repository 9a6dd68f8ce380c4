#include "apemkit/simplify.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "apemkit/error.hpp"

namespace apemkit {

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::Raw:
      return "raw";
    case Stage::Summed:
      return "summed";
    case Stage::Clamped:
      return "clamped";
    case Stage::ImageMultiplied:
      return "multiplied";
  }
  return "unknown";
}

std::optional<Stage> parse_stage(std::string_view text) {
  for (int i = 0; i <= 3; ++i) {
    const auto s = static_cast<Stage>(i);
    if (text == stage_name(s) || text == std::to_string(i)) return s;
  }
  return std::nullopt;
}

Tensor sum_channels(const Tensor& raw) {
  if (raw.rank() != 3) throw ShapeError("sum_channels expects (C, H, W), got " + shape_string(raw.shape()));
  const std::size_t c = raw.dim(0), plane = raw.dim(1) * raw.dim(2);
  Tensor out(Shape{1, raw.dim(1), raw.dim(2)});
  for (std::size_t p = 0; p < plane; ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += raw[k * plane + p];
    out[p] = s;
  }
  return out;
}

double nearest_rank_percentile(std::span<const double> values, int percent) {
  if (values.empty()) throw InvalidArgument("percentile of an empty map");
  if (percent <= 0 || percent > 100) throw InvalidArgument("percent must be in (0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  const std::size_t n = sorted.size();
  const std::size_t rank = (static_cast<std::size_t>(percent) * n + 99) / 100;  // ceil, >= 1
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

Tensor clamp_to_percentile(const Tensor& map, int percent) {
  const double cap = nearest_rank_percentile(map.values(), percent);
  Tensor out = map;
  for (double& v : out.values()) v = std::min(v, cap);
  return out;
}

Tensor multiply_by_grayscale(const Tensor& map, const Tensor& image) {
  if (image.rank() != 3 || map.shape() != Shape{1, image.dim(1), image.dim(2)}) {
    throw ShapeError("multiply_by_grayscale: map " + shape_string(map.shape()) +
                     " does not match image " + shape_string(image.shape()));
  }
  const Tensor gray = sum_channels(image);
  const double channels = static_cast<double>(image.dim(0));
  Tensor out = map;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= gray[i] / channels;
  return out;
}

Tensor normalize_unit_range(const Tensor& map) {
  const auto [lo, hi] = std::minmax_element(map.values().begin(), map.values().end());
  const double min = *lo, range = *hi - *lo;
  Tensor out(map.shape());
  if (range > 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (map[i] - min) / range;
  }
  return out;
}

RelevanceMap simplify(const Tensor& raw, const Tensor& image, Stage stage) {
  require_finite(raw, "raw attribution");
  require_same_shape(raw, image, "simplify");
  if (raw.rank() != 3) throw ShapeError("simplify expects (C, H, W) attributions");
  Tensor map = raw;
  if (stage >= Stage::Summed) map = sum_channels(map);
  if (stage >= Stage::Clamped) map = clamp_to_percentile(map, 99);
  if (stage >= Stage::ImageMultiplied) map = multiply_by_grayscale(map, image);
  return {normalize_unit_range(map), stage};
}

}  // namespace apemkit
