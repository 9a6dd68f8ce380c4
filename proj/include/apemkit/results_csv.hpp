#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apemkit/apem.hpp"

namespace apemkit {

/// One per-image evaluation record. Column order on disk:
/// image_id, method, stage, eps_minus, eps_plus, gap, capped_minus,
/// capped_plus, predicted_class, true_class, confidence, loss[, shuffle]
///
/// Undefined gaps (zero relevance or irrelevance map) write "NA" in the
/// eps/gap/capped columns.
struct EvalRow {
  std::string image_id;
  std::string method;
  std::string stage;
  std::optional<GapResult> result;
  std::size_t predicted_class = 0;
  std::size_t true_class = 0;
  double confidence = 0.0;
  double loss = 0.0;
  std::optional<std::size_t> shuffle;

  bool correct() const noexcept { return predicted_class == true_class; }

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

std::string eval_rows_to_csv(std::span<const EvalRow> rows, bool with_shuffle = false);

/// Accepts files with or without the trailing shuffle column.
std::vector<EvalRow> parse_eval_csv(std::string_view text, const std::string& source = "<memory>");

void write_eval_csv(const std::filesystem::path& path, std::span<const EvalRow> rows,
                    bool with_shuffle = false);
std::vector<EvalRow> read_eval_csv(const std::filesystem::path& path);

}  // namespace apemkit
