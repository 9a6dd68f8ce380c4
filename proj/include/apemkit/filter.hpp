#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "apemkit/apem.hpp"

namespace apemkit {

struct FilterOptions {
  SearchOptions search;
  /// Fraction of the current non-zero pixels zeroed per iteration (min 1).
  double batch_fraction = 0.05;
};

struct FilterStep {
  double threshold = 0.0;        ///< largest value zeroed in this step
  std::size_t zeroed = 0;        ///< pixels zeroed in this step
  std::optional<long long> gap;  ///< empty when the step left an all-zero map
  bool reverted = false;
};

struct FilterTrace {
  std::vector<FilterStep> iterations;
  RelevanceMap final_map;
  GapResult original;
  GapResult final;
  long long original_gap = 0;
  long long final_gap = 0;
  bool reverted = false;  ///< the loop ended by undoing a step
};

/// Repeatedly zeroes the smallest non-zero relevance values (all values tied
/// at the threshold go together) and recomputes the gap with the gradient
/// frozen at the original image. Stops, undoing the last step, as soon as the
/// gap drops strictly below the best seen so far. Equal gaps continue.
///
/// Throws FilterInapplicable when the input map's gap is undefined.
FilterTrace filter_map(const Network& net, const Tensor& image, std::size_t reference_class,
                       const RelevanceMap& map, const FilterOptions& options);

}  // namespace apemkit
