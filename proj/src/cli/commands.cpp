#include "apemkit/cli/commands.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <json.hpp>
#include <optional>
#include <ostream>

#include "apemkit/apem.hpp"
#include "apemkit/filter.hpp"
#include "apemkit/model_io.hpp"
#include "apemkit/parallel.hpp"
#include "apemkit/relevance_io.hpp"
#include "apemkit/rng.hpp"
#include "apemkit/stats.hpp"
#include "apemkit/train.hpp"

namespace apemkit::cli {
namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const MethodInapplicable*>(&e) ||
      dynamic_cast<const InvalidArgument*>(&e)) {
    return kExitData;
  }
  return kExitFailure;
}

std::string image_id(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", id);
  return buf;
}

namespace {

SyntheticOptions synthetic_options(const DatasetConfig& d, std::size_t count, std::uint64_t seed) {
  SyntheticOptions o;
  o.num_classes = d.classes;
  o.size = d.size;
  o.channels = d.channels;
  o.count = count;
  o.seed = seed;
  o.noise = d.noise;
  o.weak_probability = d.weak_probability;
  o.spurious_probability = d.spurious_probability;
  return o;
}

Dataset load_idx_split(const DatasetConfig& d, const char* images, const char* labels) {
  const fs::path dir(d.path);
  Dataset data = load_idx(dir / images, dir / labels);
  validate_dataset(data);
  return data;
}

void check_compatible(const Network& net, const Dataset& data, const fs::path& model_path) {
  if (net.input_shape() != data.image_shape) {
    throw ShapeError(model_path.string() + ": model expects input " + shape_string(net.input_shape()) +
                     " but the dataset has images of shape " + shape_string(data.image_shape));
  }
  for (const auto& s : data.samples) {
    if (s.label >= net.num_classes()) {
      throw ShapeError(model_path.string() + ": dataset label " + std::to_string(s.label) +
                       " exceeds the model's " + std::to_string(net.num_classes()) + " classes");
    }
  }
}

fs::path out_dir(const RunConfig& c) { return fs::path(c.out); }

void persist_config(const RunConfig& c) {
  write_file_bytes(out_dir(c) / "config.json", serialize_config(c));
}

Network load_checked_model(const RunConfig& c, const Dataset& data) {
  const auto path = config_model_path(c);
  Network net = load_model(path);
  check_compatible(net, data, path);
  write_file_bytes(out_dir(c) / "model_manifest.json", model_manifest(net));
  return net;
}

std::string map_path_component(Method m, Stage s) {
  return std::string(method_name(m)) + "/" + std::string(stage_name(s));
}

std::size_t count_nonzero(const Tensor& t) {
  std::size_t n = 0;
  for (double v : t.values()) n += v != 0.0;
  return n;
}

EvalRow base_row(const Sample& sample, const Prediction& pred, Method m, Stage s) {
  EvalRow row;
  row.image_id = image_id(sample.id);
  row.method = std::string(method_name(m));
  row.stage = std::string(stage_name(s));
  row.predicted_class = pred.predicted_class;
  row.true_class = sample.label;
  row.confidence = pred.confidence;
  row.loss = loss(pred, sample.label);
  return row;
}

std::optional<GapResult> gap_or_undefined(const Network& net, const Tensor& image, std::size_t ref,
                                          const RelevanceMap& map, const SearchOptions& search) {
  try {
    return gap(net, image, ref, map, search);
  } catch (const ZeroMapError&) {
    return std::nullopt;
  }
}

// Maps for one image, in (method, stage) order, explaining the predicted class.
struct ImageMaps {
  Prediction prediction;
  std::vector<std::pair<Method, std::vector<RelevanceMap>>> maps;
  std::vector<std::map<std::string, double>> params;
};

ImageMaps explain_image(const Network& net, const Sample& sample, const std::vector<Method>& methods,
                        const std::vector<Stage>& stages, const MethodParams& params) {
  ImageMaps out;
  out.prediction = forward(net, sample.image);
  const Sample target{sample.image, out.prediction.predicted_class, sample.id};
  for (Method m : methods) {
    const RawAttribution raw = explain(m, net, target, params);
    std::vector<RelevanceMap> per_stage;
    for (Stage s : stages) per_stage.push_back(simplify(raw.values, sample.image, s));
    out.maps.emplace_back(m, std::move(per_stage));
    out.params.push_back(raw.params);
  }
  return out;
}

template <class T>
std::vector<T> flatten(std::vector<std::vector<T>> nested) {
  std::vector<T> out;
  for (auto& v : nested) {
    for (auto& x : v) out.push_back(std::move(x));
  }
  return out;
}

}  // namespace

Dataset load_train_split(const RunConfig& config) {
  const auto& d = config.dataset;
  if (d.kind == "idx") return load_idx_split(d, "train-images-idx3-ubyte", "train-labels-idx1-ubyte");
  return make_synthetic(synthetic_options(d, d.train_count, d.train_seed));
}

Dataset load_eval_split(const RunConfig& config) {
  const auto& d = config.dataset;
  Dataset data = d.kind == "idx"
                     ? load_idx_split(d, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
                     : make_synthetic(synthetic_options(d, d.eval_count, d.eval_seed));
  if (d.eval_limit > 0 && data.samples.size() > d.eval_limit) data.samples.resize(d.eval_limit);
  return data;
}

TrainSummary cmd_train(const RunConfig& config) {
  validate_config(config);
  persist_config(config);
  const Dataset train_data = load_train_split(config);
  const Dataset eval_data = load_eval_split(config);
  if (train_data.samples.empty()) throw InvalidArgument("training split is empty");
  Network net = make_desk_cnn(train_data.image_shape, train_data.num_classes, config.seed);
  TrainReport report;
  net = train(std::move(net), train_data.samples, config_train(config), &report);

  TrainSummary summary;
  summary.train_accuracy = accuracy(net, train_data.samples);
  summary.eval_accuracy = accuracy(net, eval_data.samples);
  summary.epoch_mean_loss = report.epoch_mean_loss;

  save_model(config_model_path(config), net);
  write_file_bytes(out_dir(config) / "model_manifest.json", model_manifest(net));
  json acc{{"train_accuracy", summary.train_accuracy},
           {"eval_accuracy", summary.eval_accuracy},
           {"train_count", train_data.samples.size()},
           {"eval_count", eval_data.samples.size()},
           {"epoch_mean_loss", summary.epoch_mean_loss}};
  write_file_bytes(out_dir(config) / "reports" / "accuracy.json", acc.dump(2) + "\n");
  return summary;
}

std::size_t cmd_explain(const RunConfig& config) {
  validate_config(config);
  persist_config(config);
  const Dataset data = load_eval_split(config);
  const Network net = load_checked_model(config, data);
  const auto methods = config_methods(config);
  const auto stages = config_stages(config);
  const auto params = config_method_params(config);
  const fs::path maps_dir = out_dir(config) / "maps";
  parallel_for(data.samples.size(), config_workers(config), [&](std::size_t i) {
    const Sample& sample = data.samples[i];
    const ImageMaps maps = explain_image(net, sample, methods, stages, params);
    for (std::size_t mi = 0; mi < maps.maps.size(); ++mi) {
      const auto& [method, per_stage] = maps.maps[mi];
      for (std::size_t si = 0; si < per_stage.size(); ++si) {
        StoredMap stored{image_id(sample.id), std::string(method_name(method)), maps.params[mi],
                         per_stage[si]};
        save_map(maps_dir / map_path_component(method, stages[si]) / (stored.image_id + ".map"),
                 stored);
      }
    }
  });
  return data.samples.size() * methods.size() * stages.size();
}

std::vector<EvalRow> evaluate_samples(const Network& net, std::span<const Sample> samples,
                                      const RunConfig& config) {
  validate_config(config);
  const auto methods = config_methods(config);
  const auto stages = config_stages(config);
  const auto params = config_method_params(config);
  const auto search = config_search(config);
  std::vector<std::vector<EvalRow>> per_image(samples.size());
  parallel_for(samples.size(), config_workers(config), [&](std::size_t i) {
    const Sample& sample = samples[i];
    const ImageMaps maps = explain_image(net, sample, methods, stages, params);
    const std::size_t ref = maps.prediction.predicted_class;
    for (const auto& [method, per_stage] : maps.maps) {
      for (std::size_t si = 0; si < per_stage.size(); ++si) {
        EvalRow row = base_row(sample, maps.prediction, method, stages[si]);
        row.result = gap_or_undefined(net, sample.image, ref, per_stage[si], search);
        per_image[i].push_back(std::move(row));
      }
    }
  });
  return flatten(std::move(per_image));
}

std::vector<EvalRow> cmd_evaluate(const RunConfig& config) {
  validate_config(config);
  persist_config(config);
  const Dataset data = load_eval_split(config);
  const Network net = load_checked_model(config, data);
  auto rows = evaluate_samples(net, data.samples, config);
  const auto [correct, wrong] = split_by_correctness(rows);
  const fs::path results = out_dir(config) / "results";
  write_eval_csv(results / "apem_correct.csv", correct);
  write_eval_csv(results / "apem_misclassified.csv", wrong);
  return rows;
}

std::vector<EvalRow> cmd_shuffle_test(const RunConfig& config) {
  validate_config(config);
  persist_config(config);
  const Dataset data = load_eval_split(config);
  const Network net = load_checked_model(config, data);
  const auto methods = config_methods(config);
  const auto stages = config_stages(config);
  const auto params = config_method_params(config);
  const auto search = config_search(config);
  std::vector<std::vector<EvalRow>> per_image(data.samples.size());
  parallel_for(data.samples.size(), config_workers(config), [&](std::size_t i) {
    const Sample& sample = data.samples[i];
    const ImageMaps maps = explain_image(net, sample, methods, stages, params);
    const std::size_t ref = maps.prediction.predicted_class;
    const std::uint64_t image_seed = derive_seed(config.seed, sample.id);
    for (const auto& [method, per_stage] : maps.maps) {
      for (std::size_t si = 0; si < per_stage.size(); ++si) {
        for (std::size_t k = 0; k < config.shuffles; ++k) {
          const RelevanceMap shuffled = shuffle_map(per_stage[si], derive_seed(image_seed, k));
          EvalRow row = base_row(sample, maps.prediction, method, stages[si]);
          row.result = gap_or_undefined(net, sample.image, ref, shuffled, search);
          row.shuffle = k;
          per_image[i].push_back(std::move(row));
        }
      }
    }
  });
  auto rows = flatten(std::move(per_image));
  write_eval_csv(out_dir(config) / "results" / "shuffle.csv", rows, true);
  return rows;
}

std::size_t cmd_filter(const RunConfig& config) {
  validate_config(config);
  persist_config(config);
  const Dataset data = load_eval_split(config);
  const Network net = load_checked_model(config, data);
  const auto methods = config_methods(config);
  const auto stages = config_stages(config);
  const auto params = config_method_params(config);
  const auto options = config_filter(config);
  const fs::path maps_dir = out_dir(config) / "maps" / "filtered";

  struct Lines {
    std::string summary;
    std::string traces;
  };
  std::vector<Lines> per_image(data.samples.size());
  parallel_for(data.samples.size(), config_workers(config), [&](std::size_t i) {
    const Sample& sample = data.samples[i];
    const std::string id = image_id(sample.id);
    const ImageMaps maps = explain_image(net, sample, methods, stages, params);
    const std::size_t ref = maps.prediction.predicted_class;
    for (std::size_t mi = 0; mi < maps.maps.size(); ++mi) {
      const auto& [method, per_stage] = maps.maps[mi];
      for (std::size_t si = 0; si < per_stage.size(); ++si) {
        const std::string key =
            id + ',' + std::string(method_name(method)) + ',' + std::string(stage_name(stages[si]));
        const std::string before = std::to_string(count_nonzero(per_stage[si].values));
        FilterTrace trace;
        try {
          trace = filter_map(net, sample.image, ref, per_stage[si], options);
        } catch (const FilterInapplicable&) {
          per_image[i].summary += key + ",NA,NA,0,0," + before + ",NA\n";
          continue;
        }
        per_image[i].summary += key + ',' + std::to_string(trace.original_gap) + ',' +
                                std::to_string(trace.final_gap) + ',' +
                                std::to_string(trace.iterations.size()) + ',' +
                                (trace.reverted ? "1" : "0") + ',' + before + ',' +
                                std::to_string(count_nonzero(trace.final_map.values)) + '\n';
        for (std::size_t it = 0; it < trace.iterations.size(); ++it) {
          const auto& step = trace.iterations[it];
          per_image[i].traces += key + ',' + std::to_string(it + 1) + ',' +
                                 format_double(step.threshold) + ',' + std::to_string(step.zeroed) +
                                 ',' + (step.gap ? std::to_string(*step.gap) : "NA") + ',' +
                                 (step.reverted ? "1" : "0") + '\n';
        }
        StoredMap stored{id, std::string(method_name(method)), maps.params[mi], trace.final_map};
        save_map(maps_dir / map_path_component(method, stages[si]) / (id + ".map"), stored);
      }
    }
  });
  std::string summary =
      "image_id,method,stage,original_gap,final_gap,iterations,reverted,nonzero_before,"
      "nonzero_after\n";
  std::string traces = "image_id,method,stage,iteration,threshold,zeroed_count,gap,reverted\n";
  for (const auto& lines : per_image) {
    summary += lines.summary;
    traces += lines.traces;
  }
  const fs::path results = out_dir(config) / "results";
  write_file_bytes(results / "filter_summary.csv", summary);
  write_file_bytes(results / "filter_traces.csv", traces);
  return data.samples.size() * methods.size() * stages.size();
}

namespace {

std::vector<std::pair<std::string, std::string>> groups_of(std::span<const EvalRow> rows) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : summarize(rows)) out.emplace_back(s.method, s.stage);
  return out;
}

json correlation_json(const CorrelationResult& c) {
  json j{{"x", c.x_name}, {"y", c.y_name}, {"n", c.n}};
  j["rho"] = c.rho ? json(*c.rho) : json(nullptr);
  j["p_value"] = c.p_value ? json(*c.p_value) : json(nullptr);
  if (!c.reason.empty()) j["reason"] = c.reason;
  return j;
}

std::string optional_number(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("NA");
}

}  // namespace

void cmd_report(const RunConfig& config) {
  validate_config(config);
  persist_config(config);
  const fs::path results = out_dir(config) / "results";
  const fs::path reports = out_dir(config) / "reports";
  const auto correct = read_eval_csv(results / "apem_correct.csv");
  const auto wrong = read_eval_csv(results / "apem_misclassified.csv");
  std::vector<EvalRow> all = correct;
  all.insert(all.end(), wrong.begin(), wrong.end());

  json report;
  SpearmanOptions sp;
  sp.permutations = config.permutations;
  sp.workers = config_workers(config);
  std::uint64_t test_index = 0;

  std::string correlation_csv = "subset,x,y,stage,n,rho,p_value,reason\n";
  std::string pairwise_csv = "subset,stage,method_a,method_b,better,equal,worse,included,excluded\n";
  const std::pair<const char*, const std::vector<EvalRow>*> subsets[] = {
      {"correct", &correct}, {"misclassified", &wrong}, {"all", &all}};
  for (const auto& [name, rows] : subsets) {
    const auto summaries = summarize(*rows);
    write_file_bytes(reports / (std::string("summary_") + name + ".csv"), summaries_to_csv(summaries));
    json js = json::array();
    for (const auto& s : summaries) {
      json j{{"method", s.method},         {"stage", s.stage},
             {"n_images", s.n_images},     {"defined", s.defined_count},
             {"capped", s.capped_count},   {"undefined", s.undefined_count}};
      if (s.gaps) {
        j["mean_gap"] = s.gaps->mean;
        j["median_gap"] = s.gaps->median;
        j["q1"] = s.gaps->q1;
        j["q3"] = s.gaps->q3;
      }
      js.push_back(j);
    }
    report[name]["summary"] = js;

    const auto groups = groups_of(*rows);
    json jp = json::array();
    for (const auto& [ma, stage] : groups) {
      for (const auto& [mb, stage_b] : groups) {
        if (ma == mb || stage != stage_b) continue;
        const auto p = pairwise(select_rows(*rows, ma, stage), select_rows(*rows, mb, stage));
        pairwise_csv += std::string(name) + ',' + stage + ',' + ma + ',' + mb + ',' +
                        format_double(p.better) + ',' + format_double(p.equal) + ',' +
                        format_double(p.worse) + ',' + std::to_string(p.included) + ',' +
                        std::to_string(p.excluded) + '\n';
        jp.push_back({{"stage", stage}, {"a", ma}, {"b", mb}, {"better", p.better},
                      {"equal", p.equal}, {"worse", p.worse}, {"included", p.included},
                      {"excluded", p.excluded}});
      }
    }
    report[name]["pairwise"] = jp;

    json jc = json::array();
    auto correlate = [&](const std::string& x_name, const std::string& stage,
                         std::span<const EvalRow> group, bool use_confidence) {
      std::vector<double> x, y;
      for (const auto& r : group) {
        if (use_confidence) {
          x.push_back(r.confidence);
        } else if (r.result && r.result->measured()) {
          x.push_back(static_cast<double>(r.result->gap));
        } else {
          continue;
        }
        y.push_back(r.loss);
      }
      CorrelationResult c;
      if (x.size() < 3) {
        c.n = x.size();
        c.reason = "fewer than three values";
      } else {
        sp.seed = derive_seed(config.seed, test_index);
        c = spearman(x, y, sp);
      }
      ++test_index;
      c.x_name = x_name;
      c.y_name = "loss";
      correlation_csv += std::string(name) + ',' + x_name + ",loss," + stage + ',' +
                         std::to_string(c.n) + ',' + optional_number(c.rho) + ',' +
                         optional_number(c.p_value) + ',' + c.reason + '\n';
      json j = correlation_json(c);
      j["stage"] = stage;
      jc.push_back(j);
    };
    for (const auto& [method, stage] : groups) {
      correlate(method, stage, select_rows(*rows, method, stage), false);
    }
    if (!groups.empty()) {
      correlate("confidence", groups.front().second,
                select_rows(*rows, groups.front().first, groups.front().second), true);
    }
    report[name]["correlation"] = jc;
  }
  write_file_bytes(reports / "pairwise.csv", pairwise_csv);
  write_file_bytes(reports / "correlation.csv", correlation_csv);

  // eps+ differences between every pair of methods, all images
  std::string diff_csv = "stage,method_a,method_b,image_id,difference\n";
  std::string hist_csv = "stage,method_a,method_b,bin_lower,bin_upper,count\n";
  const auto groups = groups_of(all);
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      if (groups[a].second != groups[b].second) continue;
      const auto& stage = groups[a].second;
      const auto d = epsilon_plus_diff(select_rows(all, groups[a].first, stage),
                                       select_rows(all, groups[b].first, stage));
      const std::string key = stage + ',' + groups[a].first + ',' + groups[b].first + ',';
      for (std::size_t i = 0; i < d.differences.size(); ++i) {
        diff_csv += key + d.image_ids[i] + ',' + std::to_string(d.differences[i]) + '\n';
      }
      for (const auto& bin : d.bins) {
        hist_csv += key + std::to_string(bin.lower) + ',' + std::to_string(bin.lower + d.bin_width) +
                    ',' + std::to_string(bin.count) + '\n';
      }
    }
  }
  write_file_bytes(reports / "eps_plus_diff.csv", diff_csv);
  write_file_bytes(reports / "eps_plus_hist.csv", hist_csv);

  const fs::path shuffle_path = results / "shuffle.csv";
  if (fs::exists(shuffle_path)) {
    const auto shuffled = read_eval_csv(shuffle_path);
    const auto summaries = summarize(shuffled);
    write_file_bytes(reports / "summary_shuffle.csv", summaries_to_csv(summaries));
    json js = json::array();
    for (const auto& s : summaries) {
      json j{{"method", s.method}, {"stage", s.stage}, {"n", s.n_images}};
      if (s.gaps) j["mean_gap"] = s.gaps->mean;
      js.push_back(j);
    }
    report["shuffle"]["summary"] = js;
  }
  write_file_bytes(reports / "report.json", report.dump(2) + "\n");
}

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"apemkit: adversarial perturbation evaluation of relevance maps"};
  app.require_subcommand(1, 1);

  std::optional<std::string> config_path, dataset, model, methods, stage, out_path;
  std::optional<double> step, sigma, lrp_epsilon, batch_fraction;
  std::optional<std::size_t> cap, smooth_n, workers, epochs, eval_limit, shuffles, permutations;
  std::optional<std::uint64_t> seed;
  bool clip = false;

  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--dataset", dataset, "'synthetic' or a directory of IDX files");
  app.add_option("--model", model, "model file (default <out>/model.bin)");
  app.add_option("--methods", methods, "comma-separated explanation methods");
  app.add_option("--stage", stage, "comma-separated simplification stages (name or 0-3)");
  app.add_option("--step", step, "perturbation step size");
  app.add_option("--cap", cap, "largest step count searched");
  auto* clip_opt = app.add_flag("--clip,!--no-clip", clip, "clip perturbed pixels to [0, 1]");
  app.add_option("--sigma", sigma, "SmoothGrad noise level");
  app.add_option("--smooth-n", smooth_n, "SmoothGrad sample count");
  app.add_option("--lrp-epsilon", lrp_epsilon, "LRP stabilizer");
  app.add_option("--batch-fraction", batch_fraction, "filter batch fraction");
  app.add_option("--seed", seed, "base random seed");
  app.add_option("--workers", workers, "worker threads (0: one per processor)");
  app.add_option("--out", out_path, "run directory");
  app.add_option("--epochs", epochs, "training epochs");
  app.add_option("--eval-limit", eval_limit, "evaluate only the first N images");
  app.add_option("--shuffles", shuffles, "shuffled maps per image");
  app.add_option("--permutations", permutations, "permutation test size");

  const std::pair<const char*, const char*> commands[] = {
      {"train", "train the model"},
      {"explain", "write relevance maps"},
      {"evaluate", "per-image gaps for correct and misclassified images"},
      {"shuffle-test", "gaps of randomly shuffled maps"},
      {"filter", "filter relevance maps"},
      {"report", "summary, pairwise and correlation tables"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    RunConfig config = config_path ? load_config(*config_path) : RunConfig{};
    if (dataset) {
      if (*dataset == "synthetic") {
        config.dataset.kind = "synthetic";
      } else {
        config.dataset.kind = "idx";
        config.dataset.path = *dataset;
      }
    }
    if (model) config.model = *model;
    if (methods) config.methods = split_list(*methods);
    if (stage) config.stages = split_list(*stage);
    if (step) config.step = *step;
    if (cap) config.cap = *cap;
    if (clip_opt->count() > 0) config.clip = clip;
    if (sigma) config.smooth_sigma = *sigma;
    if (smooth_n) config.smooth_n = *smooth_n;
    if (lrp_epsilon) config.lrp_epsilon = *lrp_epsilon;
    if (batch_fraction) config.batch_fraction = *batch_fraction;
    if (seed) config.seed = *seed;
    if (workers) config.workers = *workers;
    if (out_path) config.out = *out_path;
    if (epochs) config.epochs = *epochs;
    if (eval_limit) config.dataset.eval_limit = *eval_limit;
    if (shuffles) config.shuffles = *shuffles;
    if (permutations) config.permutations = *permutations;
    if (const char* env = std::getenv("APEMKIT_SEED")) {
      try {
        std::size_t used = 0;
        config.seed = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("APEMKIT_SEED: not an unsigned integer: '") + env + "'");
      }
    }
    validate_config(config);

    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "train") {
      const auto s = cmd_train(config);
      out << "train: accuracy " << s.train_accuracy << " (train), " << s.eval_accuracy
          << " (eval); model " << config_model_path(config).string() << "\n";
    } else if (command == "explain") {
      out << "explain: wrote " << cmd_explain(config) << " maps\n";
    } else if (command == "evaluate") {
      out << "evaluate: " << cmd_evaluate(config).size() << " rows\n";
    } else if (command == "shuffle-test") {
      out << "shuffle-test: " << cmd_shuffle_test(config).size() << " rows\n";
    } else if (command == "filter") {
      out << "filter: " << cmd_filter(config) << " maps\n";
    } else {
      cmd_report(config);
      out << "report: wrote " << (fs::path(config.out) / "reports").string() << "\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace apemkit::cli
