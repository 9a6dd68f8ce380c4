#include "apemkit/filter.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "apemkit/error.hpp"

namespace apemkit {

FilterTrace filter_map(const Network& net, const Tensor& image, std::size_t reference_class,
                       const RelevanceMap& map, const FilterOptions& options) {
  if (!(options.batch_fraction > 0.0 && options.batch_fraction <= 1.0)) {
    throw InvalidArgument("batch fraction must be in (0, 1]");
  }
  const Tensor grad = input_gradient(net, image, reference_class);

  FilterTrace trace;
  try {
    trace.original = gap_with_gradient(net, image, reference_class, grad, map.values, options.search);
  } catch (const ZeroMapError& e) {
    throw FilterInapplicable(std::string("cannot filter: ") + e.what());
  }
  trace.final = trace.original;
  trace.final_map = map;
  long long best = trace.original.gap;

  std::vector<double> nonzero;
  while (true) {
    const auto values = trace.final_map.values.values();
    nonzero.clear();
    for (double v : values) {
      if (v != 0.0) nonzero.push_back(v);
    }
    if (nonzero.empty()) break;
    const auto count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(options.batch_fraction * static_cast<double>(nonzero.size()))));
    std::nth_element(nonzero.begin(), nonzero.begin() + static_cast<std::ptrdiff_t>(count - 1), nonzero.end());

    FilterStep step;
    step.threshold = nonzero[count - 1];
    RelevanceMap candidate = trace.final_map;
    for (double& v : candidate.values.values()) {
      if (v != 0.0 && v <= step.threshold) {
        v = 0.0;
        ++step.zeroed;
      }
    }

    std::optional<GapResult> result;
    try {
      result = gap_with_gradient(net, image, reference_class, grad, candidate.values, options.search);
      step.gap = result->gap;
    } catch (const ZeroMapError&) {
      // everything zeroed: no gap to compare, treat as a drop
    }
    if (!result || result->gap < best) {
      step.reverted = true;
      trace.iterations.push_back(step);
      trace.reverted = true;
      break;
    }
    trace.iterations.push_back(step);
    best = result->gap;
    trace.final = *result;
    trace.final_map = std::move(candidate);
  }
  trace.original_gap = trace.original.gap;
  trace.final_gap = trace.final.gap;
  return trace;
}

}  // namespace apemkit
