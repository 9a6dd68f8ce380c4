#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "apemkit/simplify.hpp"

namespace apemkit {

/// Relevance map container:
///
///   "APEMRMAP"   8-byte magic
///   u32 version  kMapFormatVersion
///   u64 n, n bytes  JSON header {image_id, method, params, stage, shape}
///   u64 count       number of values
///   count x f64     little-endian, row-major
inline constexpr std::uint32_t kMapFormatVersion = 1;

struct StoredMap {
  std::string image_id;
  std::string method;
  std::map<std::string, double> params;
  RelevanceMap map;

  friend bool operator==(const StoredMap&, const StoredMap&) = default;
};

std::string serialize_map(const StoredMap& stored);
StoredMap parse_map(std::string_view bytes, const std::string& source = "<memory>");

void save_map(const std::filesystem::path& path, const StoredMap& stored);
StoredMap load_map(const std::filesystem::path& path);

/// One CSV row per image row; channels are stacked vertically.
std::string map_to_csv(const Tensor& values);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace apemkit
