#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "apemkit/apem.hpp"
#include "apemkit/dataset.hpp"
#include "apemkit/error.hpp"
#include "apemkit/explain.hpp"
#include "apemkit/filter.hpp"
#include "apemkit/simplify.hpp"
#include "apemkit/train.hpp"

namespace apemkit::cli {

/// Malformed or inconsistent run configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct DatasetConfig {
  /// "synthetic", or "idx" for a directory holding
  /// train-images-idx3-ubyte, train-labels-idx1-ubyte,
  /// t10k-images-idx3-ubyte and t10k-labels-idx1-ubyte.
  std::string kind = "synthetic";
  std::string path;
  std::size_t train_count = 10000;  ///< synthetic only
  std::size_t eval_count = 1000;    ///< synthetic only
  std::uint64_t train_seed = 11;
  std::uint64_t eval_seed = 12;
  std::size_t classes = 10;
  std::size_t size = 28;
  std::size_t channels = 1;
  double noise = 0.08;
  double weak_probability = 0.12;
  double spurious_probability = 0.12;
  std::size_t eval_limit = 0;  ///< evaluate only the first N images; 0 = all

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct RunConfig {
  DatasetConfig dataset;
  std::string model;  ///< empty: <out>/model.bin
  std::size_t epochs = 3;
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
  std::vector<std::string> methods = {"gradient", "smoothgrad",  "lrp",
                                      "guided_backprop", "gradcam", "guided_gradcam"};
  std::size_t smooth_n = 100;
  double smooth_sigma = 0.2;
  double lrp_epsilon = 1.0;
  std::vector<std::string> stages = {"multiplied"};
  double step = 1.0;
  std::size_t cap = 10000;
  bool clip = false;
  double batch_fraction = 0.05;
  std::size_t shuffles = 10;
  std::size_t permutations = 10000;
  std::uint64_t seed = 0;
  std::size_t workers = 0;  ///< 0: one per processor; never affects outputs
  std::string out = "run";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// JSON text. Unknown keys and wrongly typed values throw ConfigError naming
/// the field. Missing keys keep their defaults.
RunConfig parse_config(std::string_view json_text, const std::string& source = "<config>");
std::string serialize_config(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

/// Range and name checks; throws ConfigError.
void validate_config(const RunConfig& config);

std::vector<Method> config_methods(const RunConfig& config);
std::vector<Stage> config_stages(const RunConfig& config);
MethodParams config_method_params(const RunConfig& config);
SearchOptions config_search(const RunConfig& config);
FilterOptions config_filter(const RunConfig& config);
TrainOptions config_train(const RunConfig& config);
std::filesystem::path config_model_path(const RunConfig& config);
std::size_t config_workers(const RunConfig& config);

}  // namespace apemkit::cli
