#include "apemkit/results_csv.hpp"

#include <charconv>
#include <sstream>

#include "apemkit/error.hpp"
#include "apemkit/model_io.hpp"
#include "apemkit/relevance_io.hpp"

namespace apemkit {
namespace {

constexpr std::string_view kHeader =
    "image_id,method,stage,eps_minus,eps_plus,gap,capped_minus,capped_plus,predicted_class,"
    "true_class,confidence,loss";

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view field, const std::string& where) {
  T v{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw FormatError(where + ": cannot parse '" + std::string(field) + "'");
  }
  return v;
}

bool parse_flag(std::string_view field, const std::string& where) {
  if (field == "1") return true;
  if (field == "0") return false;
  throw FormatError(where + ": expected 0 or 1, got '" + std::string(field) + "'");
}

}  // namespace

std::string eval_rows_to_csv(std::span<const EvalRow> rows, bool with_shuffle) {
  std::string out(kHeader);
  if (with_shuffle) out += ",shuffle";
  out += '\n';
  for (const auto& r : rows) {
    out += r.image_id + ',' + r.method + ',' + r.stage + ',';
    if (r.result) {
      const auto& g = *r.result;
      out += std::to_string(g.eps_minus) + ',' + std::to_string(g.eps_plus) + ',' +
             std::to_string(g.gap) + ',' + (g.capped_minus ? "1" : "0") + ',' +
             (g.capped_plus ? "1" : "0") + ',';
    } else {
      out += "NA,NA,NA,NA,NA,";
    }
    out += std::to_string(r.predicted_class) + ',' + std::to_string(r.true_class) + ',' +
           format_double(r.confidence) + ',' + format_double(r.loss);
    if (with_shuffle) out += ',' + (r.shuffle ? std::to_string(*r.shuffle) : std::string("NA"));
    out += '\n';
  }
  return out;
}

std::vector<EvalRow> parse_eval_csv(std::string_view text, const std::string& source) {
  std::vector<EvalRow> rows;
  std::size_t pos = 0, line_no = 0;
  bool with_shuffle = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      if (line == kHeader) continue;
      if (line == std::string(kHeader) + ",shuffle") {
        with_shuffle = true;
        continue;
      }
      throw FormatError(source + ": unexpected CSV header");
    }
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto f = split(line);
    if (f.size() != (with_shuffle ? 13u : 12u)) throw FormatError(where + ": wrong column count");
    EvalRow r;
    r.image_id = std::string(f[0]);
    r.method = std::string(f[1]);
    r.stage = std::string(f[2]);
    if (f[3] != "NA") {
      GapResult g;
      g.eps_minus = parse_number<std::size_t>(f[3], where);
      g.eps_plus = parse_number<std::size_t>(f[4], where);
      g.gap = parse_number<long long>(f[5], where);
      g.capped_minus = parse_flag(f[6], where);
      g.capped_plus = parse_flag(f[7], where);
      if (g.gap != static_cast<long long>(g.eps_plus) - static_cast<long long>(g.eps_minus)) {
        throw FormatError(where + ": gap != eps_plus - eps_minus");
      }
      r.result = g;
    }
    r.predicted_class = parse_number<std::size_t>(f[8], where);
    r.true_class = parse_number<std::size_t>(f[9], where);
    r.confidence = parse_number<double>(f[10], where);
    r.loss = parse_number<double>(f[11], where);
    if (with_shuffle && f[12] != "NA") r.shuffle = parse_number<std::size_t>(f[12], where);
    rows.push_back(std::move(r));
  }
  if (line_no == 0) throw FormatError(source + ": empty CSV");
  return rows;
}

void write_eval_csv(const std::filesystem::path& path, std::span<const EvalRow> rows,
                    bool with_shuffle) {
  write_file_bytes(path, eval_rows_to_csv(rows, with_shuffle));
}

std::vector<EvalRow> read_eval_csv(const std::filesystem::path& path) {
  return parse_eval_csv(read_file_bytes(path), path.string());
}

}  // namespace apemkit
