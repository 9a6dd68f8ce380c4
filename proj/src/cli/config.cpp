#include "apemkit/cli/config.hpp"

#include <cmath>
#include <json.hpp>
#include <set>

#include "apemkit/model_io.hpp"
#include "apemkit/parallel.hpp"

namespace apemkit::cli {
namespace {

using nlohmann::json;

// Reads known keys out of one JSON object and rejects leftovers.
class Fields {
 public:
  Fields(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <class T>
  void read(const char* key, T& target) {
    seen_.insert(key);
    const auto it = object_.find(key);
    if (it == object_.end()) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      target = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where() + "." + key + ": wrong type (" + it->dump() + ")");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : object_.items()) {
      if (!seen_.count(key)) throw ConfigError(where() + ": unknown key '" + key + "'");
    }
  }

  std::string where() const { return path_; }

 private:
  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

json to_json(const RunConfig& c) {
  const auto& d = c.dataset;
  return json{
      {"dataset",
       {{"kind", d.kind},
        {"path", d.path},
        {"train_count", d.train_count},
        {"eval_count", d.eval_count},
        {"train_seed", d.train_seed},
        {"eval_seed", d.eval_seed},
        {"classes", d.classes},
        {"size", d.size},
        {"channels", d.channels},
        {"noise", d.noise},
        {"weak_probability", d.weak_probability},
        {"spurious_probability", d.spurious_probability},
        {"eval_limit", d.eval_limit}}},
      {"model", c.model},
      {"epochs", c.epochs},
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"methods", c.methods},
      {"smooth_n", c.smooth_n},
      {"smooth_sigma", c.smooth_sigma},
      {"lrp_epsilon", c.lrp_epsilon},
      {"stages", c.stages},
      {"step", c.step},
      {"cap", c.cap},
      {"clip", c.clip},
      {"batch_fraction", c.batch_fraction},
      {"shuffles", c.shuffles},
      {"permutations", c.permutations},
      {"seed", c.seed},
      {"workers", c.workers},
      {"out", c.out},
  };
}

std::vector<std::string> string_list(const json* node, const std::string& where) {
  if (!node->is_array()) throw ConfigError(where + ": expected a list of strings");
  std::vector<std::string> out;
  for (const auto& item : *node) {
    if (!item.is_string()) throw ConfigError(where + ": expected a list of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

RunConfig parse_config(std::string_view json_text, const std::string& source) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": invalid JSON: " + e.what());
  }
  RunConfig c;
  Fields top(root, source);
  if (const json* ds = top.child("dataset")) {
    Fields f(*ds, source + ": dataset");
    auto& d = c.dataset;
    f.read("kind", d.kind);
    f.read("path", d.path);
    f.read("train_count", d.train_count);
    f.read("eval_count", d.eval_count);
    f.read("train_seed", d.train_seed);
    f.read("eval_seed", d.eval_seed);
    f.read("classes", d.classes);
    f.read("size", d.size);
    f.read("channels", d.channels);
    f.read("noise", d.noise);
    f.read("weak_probability", d.weak_probability);
    f.read("spurious_probability", d.spurious_probability);
    f.read("eval_limit", d.eval_limit);
    f.finish();
  }
  top.read("model", c.model);
  top.read("epochs", c.epochs);
  top.read("learning_rate", c.learning_rate);
  top.read("batch_size", c.batch_size);
  if (const json* m = top.child("methods")) c.methods = string_list(m, source + ": methods");
  top.read("smooth_n", c.smooth_n);
  top.read("smooth_sigma", c.smooth_sigma);
  top.read("lrp_epsilon", c.lrp_epsilon);
  if (const json* s = top.child("stages")) c.stages = string_list(s, source + ": stages");
  top.read("step", c.step);
  top.read("cap", c.cap);
  top.read("clip", c.clip);
  top.read("batch_fraction", c.batch_fraction);
  top.read("shuffles", c.shuffles);
  top.read("permutations", c.permutations);
  top.read("seed", c.seed);
  top.read("workers", c.workers);
  top.read("out", c.out);
  top.finish();
  return c;
}

std::string serialize_config(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file_bytes(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse_config(text, path.string());
}

void validate_config(const RunConfig& c) {
  const auto& d = c.dataset;
  if (d.kind != "synthetic" && d.kind != "idx") {
    throw ConfigError("dataset.kind: expected 'synthetic' or 'idx', got '" + d.kind + "'");
  }
  if (d.kind == "idx" && d.path.empty()) throw ConfigError("dataset.path: required for idx datasets");
  if (d.kind == "synthetic") {
    if (d.train_count == 0 || d.eval_count == 0) {
      throw ConfigError("dataset.train_count/eval_count: must be positive");
    }
    if (d.classes < 2 || d.classes > 10) throw ConfigError("dataset.classes: must be in [2, 10]");
    if (d.size < 8 || d.size % 4 != 0) {
      throw ConfigError("dataset.size: must be >= 8 and divisible by 4");
    }
    if (d.channels != 1 && d.channels != 3) throw ConfigError("dataset.channels: must be 1 or 3");
    if (!(d.noise >= 0.0)) throw ConfigError("dataset.noise: must be >= 0");
    for (double p : {d.weak_probability, d.spurious_probability}) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("dataset probabilities must be in [0, 1]");
    }
  }
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate: must be positive");
  if (c.batch_size == 0) throw ConfigError("batch_size: must be positive");
  if (c.methods.empty()) throw ConfigError("methods: at least one method is required");
  for (const auto& m : c.methods) {
    if (!parse_method(m)) throw ConfigError("methods: unknown method '" + m + "'");
  }
  if (c.stages.empty()) throw ConfigError("stages: at least one stage is required");
  for (const auto& s : c.stages) {
    if (!parse_stage(s)) throw ConfigError("stages: unknown stage '" + s + "'");
  }
  if (c.smooth_n == 0) throw ConfigError("smooth_n: must be positive");
  if (!(c.smooth_sigma >= 0.0)) throw ConfigError("smooth_sigma: must be >= 0");
  if (!(c.lrp_epsilon >= 0.0)) throw ConfigError("lrp_epsilon: must be >= 0");
  if (!(c.step > 0.0) || !std::isfinite(c.step)) throw ConfigError("step: must be positive");
  if (c.cap == 0) throw ConfigError("cap: must be at least 1");
  if (!(c.batch_fraction > 0.0 && c.batch_fraction <= 1.0)) {
    throw ConfigError("batch_fraction: must be in (0, 1]");
  }
  if (c.shuffles == 0) throw ConfigError("shuffles: must be positive");
  if (c.permutations == 0) throw ConfigError("permutations: must be positive");
  if (c.out.empty()) throw ConfigError("out: output directory is required");
}

std::vector<Method> config_methods(const RunConfig& config) {
  std::vector<Method> out;
  for (const auto& m : config.methods) {
    const auto parsed = parse_method(m);
    if (!parsed) throw ConfigError("methods: unknown method '" + m + "'");
    out.push_back(*parsed);
  }
  return out;
}

std::vector<Stage> config_stages(const RunConfig& config) {
  std::vector<Stage> out;
  for (const auto& s : config.stages) {
    const auto parsed = parse_stage(s);
    if (!parsed) throw ConfigError("stages: unknown stage '" + s + "'");
    out.push_back(*parsed);
  }
  return out;
}

MethodParams config_method_params(const RunConfig& config) {
  MethodParams p;
  p.smooth_n = config.smooth_n;
  p.smooth_sigma = config.smooth_sigma;
  p.lrp_epsilon = config.lrp_epsilon;
  p.seed = config.seed;
  return p;
}

SearchOptions config_search(const RunConfig& config) {
  SearchOptions s;
  s.step = config.step;
  s.cap = config.cap;
  s.clip = config.clip;
  return s;
}

FilterOptions config_filter(const RunConfig& config) {
  FilterOptions f;
  f.search = config_search(config);
  f.batch_fraction = config.batch_fraction;
  return f;
}

TrainOptions config_train(const RunConfig& config) {
  TrainOptions t;
  t.epochs = config.epochs;
  t.learning_rate = config.learning_rate;
  t.batch_size = config.batch_size;
  t.seed = config.seed;
  return t;
}

std::filesystem::path config_model_path(const RunConfig& config) {
  if (!config.model.empty()) return config.model;
  return std::filesystem::path(config.out) / "model.bin";
}

std::size_t config_workers(const RunConfig& config) {
  return config.workers == 0 ? default_workers() : config.workers;
}

}  // namespace apemkit::cli
