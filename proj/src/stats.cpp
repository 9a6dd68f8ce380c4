#include "apemkit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "apemkit/descriptive.hpp"
#include "apemkit/error.hpp"
#include "apemkit/parallel.hpp"
#include "apemkit/relevance_io.hpp"
#include "apemkit/rng.hpp"

namespace apemkit {

std::vector<MethodSummary> summarize(std::span<const EvalRow> rows) {
  std::vector<MethodSummary> out;
  std::vector<std::vector<GapResult>> defined;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& r : rows) {
    auto [it, inserted] = index.try_emplace({r.method, r.stage}, out.size());
    if (inserted) {
      MethodSummary fresh;
      fresh.method = r.method;
      fresh.stage = r.stage;
      out.push_back(std::move(fresh));
      defined.emplace_back();
    }
    auto& s = out[it->second];
    ++s.n_images;
    if (!r.result) {
      ++s.undefined_count;
      continue;
    }
    ++s.defined_count;
    if (!r.result->measured()) {
      ++s.capped_count;
      continue;
    }
    defined[it->second].push_back(*r.result);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!defined[i].empty()) out[i].gaps = apem(defined[i]);
  }
  return out;
}

std::pair<std::vector<EvalRow>, std::vector<EvalRow>> split_by_correctness(
    std::span<const EvalRow> rows) {
  std::pair<std::vector<EvalRow>, std::vector<EvalRow>> out;
  for (const auto& r : rows) (r.correct() ? out.first : out.second).push_back(r);
  return out;
}

std::vector<EvalRow> select_rows(std::span<const EvalRow> rows, const std::string& method,
                                 const std::string& stage) {
  std::vector<EvalRow> out;
  for (const auto& r : rows) {
    if (r.method == method && r.stage == stage) out.push_back(r);
  }
  return out;
}

namespace {

std::map<std::string, const EvalRow*> by_image(std::span<const EvalRow> rows, const char* which) {
  std::map<std::string, const EvalRow*> out;
  for (const auto& r : rows) {
    if (!out.emplace(r.image_id, &r).second) {
      throw InvalidArgument(std::string("duplicate image id '") + r.image_id + "' in " + which);
    }
  }
  return out;
}

// Matches rows of A and B by image id, in A's id order.
std::vector<std::pair<const EvalRow*, const EvalRow*>> match(std::span<const EvalRow> a,
                                                             std::span<const EvalRow> b) {
  const auto ma = by_image(a, "first list");
  const auto mb = by_image(b, "second list");
  if (ma.size() != mb.size()) throw InvalidArgument("methods were evaluated on different images");
  std::vector<std::pair<const EvalRow*, const EvalRow*>> out;
  for (const auto& [id, ra] : ma) {
    const auto it = mb.find(id);
    if (it == mb.end()) throw InvalidArgument("image '" + id + "' missing from the second list");
    out.emplace_back(ra, it->second);
  }
  return out;
}

}  // namespace

PairwiseResult pairwise(std::span<const EvalRow> a, std::span<const EvalRow> b) {
  PairwiseResult p;
  std::size_t better = 0, equal = 0, worse = 0;
  for (const auto& [ra, rb] : match(a, b)) {
    if (!ra->result || !rb->result || !ra->result->measured() || !rb->result->measured()) {
      ++p.excluded;
      continue;
    }
    const auto ga = ra->result->gap, gb = rb->result->gap;
    if (ga > gb) {
      ++better;
    } else if (ga == gb) {
      ++equal;
    } else {
      ++worse;
    }
  }
  p.included = better + equal + worse;
  if (p.included > 0) {
    const auto n = static_cast<double>(p.included);
    p.better = static_cast<double>(better) / n;
    p.equal = static_cast<double>(equal) / n;
    p.worse = static_cast<double>(worse) / n;
  }
  return p;
}

EpsilonPlusDiff epsilon_plus_diff(std::span<const EvalRow> a, std::span<const EvalRow> b,
                                  long long bin_width) {
  if (bin_width < 1) throw InvalidArgument("histogram bin width must be positive");
  EpsilonPlusDiff out;
  out.bin_width = bin_width;
  std::map<long long, std::size_t> bins;
  for (const auto& [ra, rb] : match(a, b)) {
    if (!ra->result || !rb->result || ra->result->capped_plus || rb->result->capped_plus) continue;
    const long long d = static_cast<long long>(ra->result->eps_plus) -
                        static_cast<long long>(rb->result->eps_plus);
    out.image_ids.push_back(ra->image_id);
    out.differences.push_back(d);
    // floor division so negative differences land in the bin below zero
    long long q = d / bin_width;
    if (d % bin_width != 0 && d < 0) --q;
    ++bins[q * bin_width];
  }
  for (const auto& [lower, count] : bins) out.bins.push_back({lower, count});
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share rank mean((i+1)..(j+1))
    const double rank = static_cast<double>(i + j + 2) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

namespace {

std::vector<double> centered(std::vector<double> v) {
  const double m = mean_of(v);
  for (double& x : v) x -= m;
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

CorrelationResult spearman(std::span<const double> x, std::span<const double> y,
                           const SpearmanOptions& options) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: lengths differ");
  if (x.size() < 3) throw InvalidArgument("spearman: need at least three values");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw InvalidArgument("spearman: non-finite value at index " + std::to_string(i));
    }
  }
  CorrelationResult result;
  result.n = x.size();
  const auto rx = centered(average_ranks(x));
  auto ry = centered(average_ranks(y));
  const double vx = dot(rx, rx), vy = dot(ry, ry);
  if (vx == 0.0 || vy == 0.0) {
    result.reason = vx == 0.0 ? "x ranks have zero variance" : "y ranks have zero variance";
    return result;
  }
  const double denom = std::sqrt(vx * vy);
  const double rho = std::clamp(dot(rx, ry) / denom, -1.0, 1.0);
  result.rho = rho;

  // Ranks' mean and variance are permutation invariant, so only the
  // cross product needs recomputing for each shuffled y.
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t batches = (options.permutations + batch - 1) / batch;
  std::vector<std::size_t> hits(batches, 0);
  const double observed = std::abs(rho) * (1.0 - 1e-12);
  parallel_for(batches, options.workers, [&](std::size_t b) {
    Rng rng = make_rng(options.seed, b);
    std::vector<double> perm = ry;
    const std::size_t count = std::min(batch, options.permutations - b * batch);
    for (std::size_t p = 0; p < count; ++p) {
      std::shuffle(perm.begin(), perm.end(), rng);
      if (std::abs(dot(rx, perm) / denom) >= observed) ++hits[b];
    }
  });
  const auto total_hits = std::accumulate(hits.begin(), hits.end(), std::size_t{0});
  result.p_value = static_cast<double>(total_hits + 1) / static_cast<double>(options.permutations + 1);
  return result;
}

BootstrapInterval bootstrap_mean_interval(std::span<const double> values, double confidence,
                                          std::size_t resamples, std::uint64_t seed) {
  if (values.empty()) throw InvalidArgument("bootstrap of an empty sample");
  if (!(confidence > 0.0 && confidence < 1.0)) throw InvalidArgument("confidence must be in (0, 1)");
  if (resamples == 0) throw InvalidArgument("bootstrap needs at least one resample");
  BootstrapInterval out;
  out.mean = mean_of(values);
  Rng rng(derive_seed(seed, 0));
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
    m = s / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - confidence) / 2.0;
  out.lower = quantile_sorted(means, alpha);
  out.upper = quantile_sorted(means, 1.0 - alpha);
  return out;
}

std::string summaries_to_csv(std::span<const MethodSummary> summaries) {
  std::string out =
      "method,stage,n_images,defined,capped,undefined,mean_gap,median_gap,q1,q3,min_gap,max_gap\n";
  for (const auto& s : summaries) {
    out += s.method + ',' + s.stage + ',' + std::to_string(s.n_images) + ',' +
           std::to_string(s.defined_count) + ',' + std::to_string(s.capped_count) + ',' +
           std::to_string(s.undefined_count);
    if (s.gaps) {
      for (double v : {s.gaps->mean, s.gaps->median, s.gaps->q1, s.gaps->q3, s.gaps->min, s.gaps->max}) {
        out += ',' + format_double(v);
      }
    } else {
      out += ",NA,NA,NA,NA,NA,NA";
    }
    out += '\n';
  }
  return out;
}

}  // namespace apemkit
