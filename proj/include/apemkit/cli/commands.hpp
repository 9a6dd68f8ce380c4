#pragma once

#include <cstddef>
#include <exception>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "apemkit/cli/config.hpp"
#include "apemkit/dataset.hpp"
#include "apemkit/network.hpp"
#include "apemkit/results_csv.hpp"

namespace apemkit::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

/// Maps an exception escaping a command to its exit code.
int exit_code_for(const std::exception& e);

/// Parses argv, runs one command and returns the exit code. Messages go to
/// `out`, errors to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

Dataset load_train_split(const RunConfig& config);
/// Evaluation split, truncated to dataset.eval_limit.
Dataset load_eval_split(const RunConfig& config);

/// Zero-padded sample id used in file names and CSV rows.
std::string image_id(std::size_t id);

struct TrainSummary {
  double train_accuracy = 0.0;
  double eval_accuracy = 0.0;
  std::vector<double> epoch_mean_loss;
};

/// Writes the model file, <out>/model_manifest.json and
/// <out>/reports/accuracy.json.
TrainSummary cmd_train(const RunConfig& config);

/// Writes <out>/maps/<method>/<stage>/<image_id>.map and returns the count.
std::size_t cmd_explain(const RunConfig& config);

/// One row per (image, method, stage), images in dataset order. The
/// reference class of every map and search is the model's prediction.
std::vector<EvalRow> evaluate_samples(const Network& net, std::span<const Sample> samples,
                                      const RunConfig& config);

/// Writes <out>/results/apem_correct.csv and apem_misclassified.csv.
std::vector<EvalRow> cmd_evaluate(const RunConfig& config);

/// `shuffles` shuffled-map rows per (image, method, stage), written to
/// <out>/results/shuffle.csv.
std::vector<EvalRow> cmd_shuffle_test(const RunConfig& config);

/// Writes filtered maps under <out>/maps/filtered/, per-iteration traces to
/// <out>/results/filter_traces.csv and one line per map to
/// <out>/results/filter_summary.csv. Returns the number of filtered maps.
std::size_t cmd_filter(const RunConfig& config);

/// Reads the evaluation CSVs and writes summary, pairwise, eps+ difference
/// and correlation tables plus report.json into <out>/reports/.
void cmd_report(const RunConfig& config);

}  // namespace apemkit::cli
