#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "apemkit/apem.hpp"
#include "apemkit/results_csv.hpp"

namespace apemkit {

struct MethodSummary {
  std::string method;
  std::string stage;
  std::size_t n_images = 0;
  std::size_t defined_count = 0;
  std::size_t capped_count = 0;  ///< defined rows with either search capped
  std::size_t undefined_count = 0;
  std::optional<ApemSummary> gaps;  ///< over measured gaps; empty when there are none
};

/// Groups rows by (method, stage) in order of first appearance.
std::vector<MethodSummary> summarize(std::span<const EvalRow> rows);

/// Rows split into (correct, misclassified), order preserved.
std::pair<std::vector<EvalRow>, std::vector<EvalRow>> split_by_correctness(
    std::span<const EvalRow> rows);

/// Rows matching one method and stage.
std::vector<EvalRow> select_rows(std::span<const EvalRow> rows, const std::string& method,
                                 const std::string& stage);

struct PairwiseResult {
  double better = 0.0;  ///< fraction of images where A's gap > B's
  double equal = 0.0;
  double worse = 0.0;
  std::size_t included = 0;
  std::size_t excluded = 0;  ///< images undefined or capped for either method
};

/// Compares gaps image by image. Both lists must hold the same image ids.
PairwiseResult pairwise(std::span<const EvalRow> a, std::span<const EvalRow> b);

struct HistogramBin {
  long long lower = 0;  ///< bin covers [lower, lower + width)
  std::size_t count = 0;
};

struct EpsilonPlusDiff {
  std::vector<std::string> image_ids;
  std::vector<long long> differences;  ///< eps_plus(A) - eps_plus(B)
  std::vector<HistogramBin> bins;      ///< sorted, empty bins omitted
  long long bin_width = 1;
};

/// Skips images undefined for either method or with either eps_plus capped.
EpsilonPlusDiff epsilon_plus_diff(std::span<const EvalRow> a, std::span<const EvalRow> b,
                                  long long bin_width = 1);

/// Fractional ranks starting at 1; ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct SpearmanOptions {
  std::size_t permutations = 10000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t batch_size = 500;  ///< permutations per independently seeded batch
};

struct CorrelationResult {
  std::string x_name;
  std::string y_name;
  std::optional<double> rho;
  std::optional<double> p_value;  ///< two-sided, (hits + 1) / (permutations + 1)
  std::size_t n = 0;
  std::string reason;  ///< why rho is undefined, if it is
};

/// Pearson correlation of average ranks with a permutation p-value. Throws
/// InvalidArgument for unequal lengths or fewer than three values.
CorrelationResult spearman(std::span<const double> x, std::span<const double> y,
                           const SpearmanOptions& options = {});

struct BootstrapInterval {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Percentile bootstrap interval for the mean.
BootstrapInterval bootstrap_mean_interval(std::span<const double> values, double confidence,
                                          std::size_t resamples, std::uint64_t seed);

std::string summaries_to_csv(std::span<const MethodSummary> summaries);

}  // namespace apemkit
