#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "apemkit/network.hpp"

namespace apemkit {

/// Binary model container, all integers little-endian:
///
///   "APEMMODL"                 8-byte magic
///   u32 version                kModelFormatVersion
///   u64 n, n bytes             JSON manifest (input shape, layer list with
///                              kind / shape / stride / padding / blob offsets)
///   u64 n, n bytes             parameter blob, little-endian float64
///   u32 crc32                  over every preceding byte
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::string serialize_model(const Network& net);

/// `source` only appears in error messages.
Network parse_model(std::string_view bytes, const std::string& source = "<memory>");

void save_model(const std::filesystem::path& path, const Network& net);
Network load_model(const std::filesystem::path& path);

/// The JSON manifest embedded in a serialized model, pretty-printed.
std::string model_manifest(const Network& net);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace apemkit
