#include "apemkit/relevance_io.hpp"

#include <charconv>
#include <json.hpp>

#include "apemkit/model_io.hpp"
#include "binary_io.hpp"

namespace apemkit {
namespace {

using nlohmann::json;
constexpr std::string_view kMagic = "APEMRMAP";

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string serialize_map(const StoredMap& stored) {
  json header;
  header["image_id"] = stored.image_id;
  header["method"] = stored.method;
  header["params"] = stored.params;
  header["stage"] = std::string(stage_name(stored.map.stage));
  header["shape"] = stored.map.values.shape();
  const std::string text = header.dump();

  std::string out(kMagic);
  detail::put<std::uint32_t>(out, kMapFormatVersion);
  detail::put<std::uint64_t>(out, text.size());
  out += text;
  detail::put<std::uint64_t>(out, stored.map.values.size());
  for (double v : stored.map.values.values()) detail::put_f64(out, v);
  return out;
}

StoredMap parse_map(std::string_view bytes, const std::string& source) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw FormatError(source + ": not a relevance map file");
  detail::Reader r(bytes.substr(kMagic.size()), source);
  const auto version = r.get<std::uint32_t>();
  if (version != kMapFormatVersion) {
    throw VersionError(source + ": map format version " + std::to_string(version));
  }
  const auto text = r.take(r.get<std::uint64_t>());
  StoredMap out;
  Shape shape;
  try {
    const json header = json::parse(text);
    out.image_id = header.at("image_id").get<std::string>();
    out.method = header.at("method").get<std::string>();
    out.params = header.at("params").get<std::map<std::string, double>>();
    const auto stage = parse_stage(header.at("stage").get<std::string>());
    if (!stage) throw FormatError(source + ": unknown stage");
    out.map.stage = *stage;
    shape = header.at("shape").get<Shape>();
  } catch (const json::exception& e) {
    throw FormatError(source + ": malformed map header: " + e.what());
  }
  const auto count = r.get<std::uint64_t>();
  if (count != element_count(shape)) throw FormatError(source + ": value count does not match shape");
  std::vector<double> data(count);
  for (auto& v : data) v = r.get_f64();
  if (r.remaining() != 0) throw FormatError(source + ": trailing bytes");
  out.map.values = Tensor(std::move(shape), std::move(data));
  return out;
}

void save_map(const std::filesystem::path& path, const StoredMap& stored) {
  write_file_bytes(path, serialize_map(stored));
}

StoredMap load_map(const std::filesystem::path& path) {
  return parse_map(read_file_bytes(path), path.string());
}

std::string map_to_csv(const Tensor& values) {
  if (values.rank() != 3) throw ShapeError("map_to_csv expects (C, H, W)");
  const std::size_t w = values.dim(2);
  std::string out;
  for (std::size_t row = 0; row < values.dim(0) * values.dim(1); ++row) {
    for (std::size_t x = 0; x < w; ++x) {
      if (x > 0) out += ',';
      out += format_double(values[row * w + x]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace apemkit
