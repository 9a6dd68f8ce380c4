#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "apemkit/network.hpp"
#include "apemkit/simplify.hpp"

namespace apemkit {

enum class SearchStrategy {
  /// Doubling to bracket the first flip, then bisection. Assumes the flip
  /// predicate is monotone along the ray.
  Bracketed,
  /// Evaluates every k = 1, 2, ... in turn.
  Linear,
};

struct SearchOptions {
  double step = 1.0;        ///< perturbation magnitude per search step
  std::size_t cap = 10000;  ///< largest step count tried
  bool clip = false;        ///< clamp perturbed pixels to [0, 1]
  SearchStrategy strategy = SearchStrategy::Bracketed;
};

struct EpsilonSearch {
  std::size_t steps = 0;
  bool capped = false;

  friend bool operator==(const EpsilonSearch&, const EpsilonSearch&) = default;
};

/// Per-image result: eps_minus along the relevance ray, eps_plus along the
/// irrelevance ray, both counted in steps of `step_size`.
struct GapResult {
  std::size_t eps_minus = 0;
  std::size_t eps_plus = 0;
  long long gap = 0;  ///< eps_plus - eps_minus
  double step_size = 1.0;
  bool capped_minus = false;
  bool capped_plus = false;

  /// Neither search hit the cap, so the gap is a measurement.
  bool measured() const { return !capped_minus && !capped_plus; }

  friend bool operator==(const GapResult&, const GapResult&) = default;
};

/// R / sum|R|. Throws ZeroMapError for an all-zero map and InvalidArgument
/// for negative entries.
Tensor normalize_l1(const Tensor& map);

/// 1 - r elementwise.
Tensor irrelevance(const Tensor& map);

/// r_norm * sign(grad) with sign(0) = 0. A single-channel map is broadcast
/// over the gradient's channels.
Tensor direct(const Tensor& r_norm, const Tensor& grad);

/// image + direction * (k * step), optionally clipped to [0, 1].
Tensor perturb(const Tensor& image, const Tensor& direction, std::size_t k,
               const SearchOptions& options);

/// Smallest k in [1, cap] whose perturbed image is no longer predicted as
/// `reference_class`, or {cap, capped} when none is. Throws InvalidArgument
/// if the unperturbed image is not predicted as `reference_class`.
EpsilonSearch find_epsilon(const Network& net, const Tensor& image, std::size_t reference_class,
                           const Tensor& direction, const SearchOptions& options);

/// Gap for one image given the loss gradient at the original image.
GapResult gap_with_gradient(const Network& net, const Tensor& image,
                            std::size_t reference_class, const Tensor& gradient,
                            const Tensor& map, const SearchOptions& options);

/// Full per-image procedure: one gradient at the original image, eps_minus
/// from the relevance map, eps_plus from its irrelevance. Throws ZeroMapError
/// (naming which map) when either cannot be l1-normalized.
GapResult gap(const Network& net, const Tensor& image, std::size_t reference_class,
              const RelevanceMap& map, const SearchOptions& options);

struct ApemSummary {
  std::size_t count = 0;  ///< measured gaps averaged
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;  ///< linear-interpolated quartiles
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Mean gap with distribution summary over the measured (uncapped) gaps.
/// Throws InvalidArgument when none is measured.
ApemSummary apem(std::span<const GapResult> gaps);

/// Uniform random permutation of the map's values (Fisher-Yates).
RelevanceMap shuffle_map(const RelevanceMap& map, std::uint64_t seed);

}  // namespace apemkit
