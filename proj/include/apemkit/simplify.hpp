#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "apemkit/tensor.hpp"

namespace apemkit {

/// How far a raw attribution went through the visualization pipeline.
/// Every stage ends with an affine rescale to [0, 1].
enum class Stage : int {
  Raw = 0,              ///< all channels, only rescaled
  Summed = 1,           ///< channels summed into one
  Clamped = 2,          ///< ... then clamped at the 99th percentile
  ImageMultiplied = 3,  ///< ... then multiplied by the grayscale image
};

/// "raw", "summed", "clamped", "multiplied".
std::string_view stage_name(Stage s);
/// Accepts a stage name or its number.
std::optional<Stage> parse_stage(std::string_view text);

/// A relevance map: (1, H, W) for every stage but Raw, which keeps (C, H, W).
struct RelevanceMap {
  Tensor values;
  Stage stage = Stage::ImageMultiplied;

  friend bool operator==(const RelevanceMap&, const RelevanceMap&) = default;
};

/// (C, H, W) -> (1, H, W).
Tensor sum_channels(const Tensor& raw);

/// Nearest-rank percentile: the ceil(p/100 * N)-th smallest value.
double nearest_rank_percentile(std::span<const double> values, int percent);

/// min(v, P_percent) elementwise.
Tensor clamp_to_percentile(const Tensor& map, int percent = 99);

/// Multiplies a (1, H, W) map by the unweighted channel mean of `image`.
Tensor multiply_by_grayscale(const Tensor& map, const Tensor& image);

/// (v - min) / (max - min); a constant map becomes all zeros.
Tensor normalize_unit_range(const Tensor& map);

/// Runs the pipeline up to and including `stage`, then rescales to [0, 1].
RelevanceMap simplify(const Tensor& raw, const Tensor& image, Stage stage);

}  // namespace apemkit
