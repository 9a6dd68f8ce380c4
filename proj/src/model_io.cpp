#include "apemkit/model_io.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>
#include <json.hpp>

#include "binary_io.hpp"

namespace apemkit {

namespace detail {

std::uint32_t crc32(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const auto n = static_cast<uInt>(std::min(kChunk, bytes.size() - off));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), n);
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "APEMMODL";
constexpr std::size_t kMinSize = kMagic.size() + 4 + 8 + 8 + 4;

void append_tensor(std::string& blob, const Tensor& t) {
  for (double v : t.values()) detail::put_f64(blob, v);
}

json shape_json(const Shape& s) { return json(std::vector<std::size_t>(s.begin(), s.end())); }

json build_manifest(const Network& net, std::string& blob) {
  json layers = json::array();
  for (const auto& layer : net.layers()) {
    json j;
    j["kind"] = std::string(layer_kind(layer));
    auto param_entry = [&](const Tensor& w, const Tensor& b) {
      j["weight_shape"] = shape_json(w.shape());
      j["weight_offset"] = blob.size() / 8;
      append_tensor(blob, w);
      j["bias_shape"] = shape_json(b.shape());
      j["bias_offset"] = blob.size() / 8;
      append_tensor(blob, b);
    };
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      j["in"] = d->weight.dim(1);
      j["out"] = d->weight.dim(0);
      param_entry(d->weight, d->bias);
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
      j["in_channels"] = c->weight.dim(1);
      j["out_channels"] = c->weight.dim(0);
      j["kernel"] = c->weight.dim(2);
      j["stride"] = c->stride;
      j["padding"] = c->padding;
      param_entry(c->weight, c->bias);
    } else if (const auto* p = std::get_if<MaxPool2dLayer>(&layer)) {
      j["size"] = p->size;
      j["stride"] = p->stride;
    }
    layers.push_back(std::move(j));
  }
  json manifest;
  manifest["format"] = "apemkit-model";
  manifest["version"] = kModelFormatVersion;
  manifest["input_shape"] = shape_json(net.input_shape());
  manifest["num_classes"] = net.num_classes();
  manifest["layers"] = std::move(layers);
  return manifest;
}

Tensor read_tensor(const json& shape_j, std::size_t offset, std::string_view blob,
                   const std::string& source) {
  Shape shape = shape_j.get<Shape>();
  const std::size_t n = element_count(shape);
  if (offset > blob.size() / 8 || n > blob.size() / 8 - offset) {
    throw FormatError(source + ": parameter blob reference out of range");
  }
  std::vector<double> data(n);
  detail::Reader r(blob.substr(offset * 8, n * 8), source);
  for (auto& v : data) v = r.get_f64();
  return Tensor(std::move(shape), std::move(data));
}

Layer parse_layer(const json& j, std::string_view blob, const std::string& source) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "dense") {
    DenseLayer d{read_tensor(j.at("weight_shape"), j.at("weight_offset"), blob, source),
                 read_tensor(j.at("bias_shape"), j.at("bias_offset"), blob, source)};
    return d;
  }
  if (kind == "conv2d") {
    Conv2dLayer c{read_tensor(j.at("weight_shape"), j.at("weight_offset"), blob, source),
                  read_tensor(j.at("bias_shape"), j.at("bias_offset"), blob, source),
                  j.at("stride").get<std::size_t>(), j.at("padding").get<std::size_t>()};
    return c;
  }
  if (kind == "relu") return ReluLayer{};
  if (kind == "maxpool2d") {
    return MaxPool2dLayer{j.at("size").get<std::size_t>(), j.at("stride").get<std::size_t>()};
  }
  if (kind == "flatten") return FlattenLayer{};
  throw FormatError(source + ": unknown layer kind '" + kind + "'");
}

}  // namespace

std::string model_manifest(const Network& net) {
  std::string blob;
  return build_manifest(net, blob).dump(2);
}

std::string serialize_model(const Network& net) {
  std::string blob;
  const std::string manifest = build_manifest(net, blob).dump(2);
  std::string out(kMagic);
  detail::put<std::uint32_t>(out, kModelFormatVersion);
  detail::put<std::uint64_t>(out, manifest.size());
  out += manifest;
  detail::put<std::uint64_t>(out, blob.size());
  out += blob;
  detail::put<std::uint32_t>(out, detail::crc32(out));
  return out;
}

Network parse_model(std::string_view bytes, const std::string& source) {
  if (bytes.size() < kMinSize) throw ChecksumError(source + ": file truncated");
  if (bytes.substr(0, kMagic.size()) != kMagic) throw FormatError(source + ": not a model file");
  detail::Reader header(bytes.substr(kMagic.size()), source);
  const auto version = header.get<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw VersionError(source + ": model format version " + std::to_string(version) +
                       ", expected " + std::to_string(kModelFormatVersion));
  }
  const auto body = bytes.substr(0, bytes.size() - 4);
  detail::Reader tail(bytes.substr(bytes.size() - 4), source);
  if (tail.get<std::uint32_t>() != detail::crc32(body)) {
    throw ChecksumError(source + ": checksum mismatch");
  }

  detail::Reader r(body.substr(kMagic.size() + 4), source);
  const auto manifest_text = r.take(r.get<std::uint64_t>());
  const auto blob = r.take(r.get<std::uint64_t>());
  if (r.remaining() != 0) throw FormatError(source + ": trailing bytes after parameter blob");

  try {
    const json manifest = json::parse(manifest_text);
    if (manifest.at("version").get<std::uint32_t>() != kModelFormatVersion) {
      throw VersionError(source + ": manifest version mismatch");
    }
    std::vector<Layer> layers;
    for (const auto& j : manifest.at("layers")) layers.push_back(parse_layer(j, blob, source));
    return Network(manifest.at("input_shape").get<Shape>(), std::move(layers));
  } catch (const json::exception& e) {
    throw FormatError(source + ": malformed manifest: " + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(source + ": malformed layer graph: " + e.what());
  }
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void save_model(const std::filesystem::path& path, const Network& net) {
  write_file_bytes(path, serialize_model(net));
}

Network load_model(const std::filesystem::path& path) {
  return parse_model(read_file_bytes(path), path.string());
}

}  // namespace apemkit
