#include "apemkit/apem.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "apemkit/descriptive.hpp"
#include "apemkit/error.hpp"
#include "apemkit/rng.hpp"

namespace apemkit {

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

double mean_of(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("mean of an empty sample");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

Tensor normalize_l1(const Tensor& map) {
  require_finite(map, "relevance map");
  double total = 0.0;
  for (double v : map.values()) {
    if (v < 0.0) throw InvalidArgument("normalize_l1: relevance map has negative entries");
    total += v;
  }
  if (total == 0.0) throw ZeroMapError("relevance map is all zero and cannot be l1-normalized");
  Tensor out = map;
  for (double& v : out.values()) v /= total;
  return out;
}

Tensor irrelevance(const Tensor& map) {
  Tensor out = map;
  for (double& v : out.values()) v = 1.0 - v;
  return out;
}

Tensor direct(const Tensor& r_norm, const Tensor& grad) {
  const bool broadcast = r_norm.rank() == 3 && grad.rank() == 3 && r_norm.dim(0) == 1 &&
                         r_norm.dim(1) == grad.dim(1) && r_norm.dim(2) == grad.dim(2);
  if (!broadcast) require_same_shape(r_norm, grad, "direct");
  const std::size_t plane = r_norm.size();
  Tensor out(grad.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double g = grad[i];
    const double r = r_norm[broadcast ? i % plane : i];
    out[i] = g > 0.0 ? r : (g < 0.0 ? -r : 0.0);
  }
  return out;
}

Tensor perturb(const Tensor& image, const Tensor& direction, std::size_t k,
               const SearchOptions& options) {
  require_same_shape(image, direction, "perturb");
  const double eps = static_cast<double>(k) * options.step;
  Tensor out = image;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += direction[i] * eps;
    if (options.clip) out[i] = std::clamp(out[i], 0.0, 1.0);
  }
  return out;
}

EpsilonSearch find_epsilon(const Network& net, const Tensor& image, std::size_t reference_class,
                           const Tensor& direction, const SearchOptions& options) {
  if (!(options.step > 0.0)) throw InvalidArgument("search step must be positive");
  if (options.cap == 0) throw InvalidArgument("search cap must be at least 1");
  const auto base = forward(net, image);
  if (base.predicted_class != reference_class) {
    throw InvalidArgument("reference class " + std::to_string(reference_class) +
                          " differs from the unperturbed prediction " +
                          std::to_string(base.predicted_class));
  }
  auto flipped = [&](std::size_t k) {
    return forward(net, perturb(image, direction, k, options)).predicted_class != reference_class;
  };

  const std::size_t cap = options.cap;
  if (options.strategy == SearchStrategy::Linear) {
    for (std::size_t k = 1; k <= cap; ++k) {
      if (flipped(k)) return {k, false};
    }
    return {cap, true};
  }

  if (flipped(1)) return {1, false};
  // invariant: flipped(lo) is false, flipped(hi) is true
  std::size_t lo = 1;
  std::size_t hi = 2;
  while (true) {
    if (hi >= cap) {
      hi = cap;
      if (hi == lo || !flipped(hi)) return {cap, true};
      break;
    }
    if (flipped(hi)) break;
    lo = hi;
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (flipped(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return {hi, false};
}

GapResult gap_with_gradient(const Network& net, const Tensor& image,
                            std::size_t reference_class, const Tensor& gradient,
                            const Tensor& map, const SearchOptions& options) {
  Tensor relevance_ray, irrelevance_ray;
  try {
    relevance_ray = direct(normalize_l1(map), gradient);
  } catch (const ZeroMapError&) {
    throw ZeroMapError("relevance map is all zero; gap undefined");
  }
  try {
    irrelevance_ray = direct(normalize_l1(irrelevance(map)), gradient);
  } catch (const ZeroMapError&) {
    throw ZeroMapError("irrelevance map is all zero; gap undefined");
  }
  const auto minus = find_epsilon(net, image, reference_class, relevance_ray, options);
  const auto plus = find_epsilon(net, image, reference_class, irrelevance_ray, options);
  GapResult r;
  r.eps_minus = minus.steps;
  r.eps_plus = plus.steps;
  r.gap = static_cast<long long>(plus.steps) - static_cast<long long>(minus.steps);
  r.step_size = options.step;
  r.capped_minus = minus.capped;
  r.capped_plus = plus.capped;
  return r;
}

GapResult gap(const Network& net, const Tensor& image, std::size_t reference_class,
              const RelevanceMap& map, const SearchOptions& options) {
  const Tensor grad = input_gradient(net, image, reference_class);
  return gap_with_gradient(net, image, reference_class, grad, map.values, options);
}

ApemSummary apem(std::span<const GapResult> gaps) {
  std::vector<double> values;
  values.reserve(gaps.size());
  for (const auto& g : gaps) {
    if (g.measured()) values.push_back(static_cast<double>(g.gap));
  }
  if (values.empty()) throw InvalidArgument("apem: no measured gaps to average");
  ApemSummary s;
  s.count = values.size();
  s.mean = mean_of(values);
  std::sort(values.begin(), values.end());
  s.median = quantile_sorted(values, 0.5);
  s.q1 = quantile_sorted(values, 0.25);
  s.q3 = quantile_sorted(values, 0.75);
  s.min = values.front();
  s.max = values.back();
  return s;
}

RelevanceMap shuffle_map(const RelevanceMap& map, std::uint64_t seed) {
  RelevanceMap out = map;
  auto v = out.values.values();
  Rng rng(derive_seed(seed, 0));
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
  return out;
}

}  // namespace apemkit
