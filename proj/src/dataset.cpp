#include "apemkit/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "apemkit/error.hpp"
#include "apemkit/model_io.hpp"
#include "apemkit/rng.hpp"

namespace apemkit {
namespace {

std::uint32_t read_be32(const std::string& bytes, std::size_t pos) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + 3]));
}

void append_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

// Seven-segment geometry in glyph coordinates (u right, v down), both in [0, 1].
struct Segment {
  double u0, v0, u1, v1;
};
constexpr std::array<Segment, 7> kSegments = {{
    {0, 0, 1, 0},      // a top
    {1, 0, 1, 0.5},    // b upper right
    {1, 0.5, 1, 1},    // c lower right
    {0, 1, 1, 1},      // d bottom
    {0, 0.5, 0, 1},    // e lower left
    {0, 0, 0, 0.5},    // f upper left
    {0, 0.5, 1, 0.5},  // g middle
}};
// bit i set => segment i lit
constexpr std::array<std::uint8_t, 10> kDigits = {
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110,
    0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111,
};

double segment_distance(double px, double py, double x0, double y0, double x1, double y1) {
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = px - (x0 + t * dx), ey = py - (y0 + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

void validate_dataset(const Dataset& data) {
  if (data.num_classes == 0) throw FormatError("dataset has zero classes");
  for (const auto& s : data.samples) {
    if (s.image.shape() != data.image_shape) {
      throw ShapeError("sample " + std::to_string(s.id) + " has shape " +
                       shape_string(s.image.shape()) + ", dataset expects " +
                       shape_string(data.image_shape));
    }
    if (s.label >= data.num_classes) {
      throw FormatError("sample " + std::to_string(s.id) + " label " + std::to_string(s.label) +
                        " out of range");
    }
    for (double v : s.image.values()) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw FormatError("sample " + std::to_string(s.id) + " has pixel outside [0, 1]");
      }
    }
  }
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes) {
  const std::string ib = read_file_bytes(images);
  const std::string lb = read_file_bytes(labels);
  if (ib.size() < 16 || read_be32(ib, 0) != kImageMagic) {
    throw FormatError(images.string() + ": not an IDX image file (magic 0x00000803)");
  }
  if (lb.size() < 8 || read_be32(lb, 0) != kLabelMagic) {
    throw FormatError(labels.string() + ": not an IDX label file (magic 0x00000801)");
  }
  const std::size_t n = read_be32(ib, 4), rows = read_be32(ib, 8), cols = read_be32(ib, 12);
  if (read_be32(lb, 4) != n) {
    throw FormatError(labels.string() + ": label count does not match " + images.string());
  }
  if (rows == 0 || cols == 0 || ib.size() != 16 + n * rows * cols) {
    throw FormatError(images.string() + ": size does not match header dimensions");
  }
  if (lb.size() != 8 + n) throw FormatError(labels.string() + ": size does not match header");

  Dataset data;
  data.image_shape = {1, rows, cols};
  std::size_t max_label = 0;
  data.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor img(data.image_shape);
    for (std::size_t p = 0; p < rows * cols; ++p) {
      img[p] = static_cast<unsigned char>(ib[16 + i * rows * cols + p]) / 255.0;
    }
    const std::size_t label = static_cast<unsigned char>(lb[8 + i]);
    max_label = std::max(max_label, label);
    data.samples.push_back({std::move(img), label, i});
  }
  data.num_classes = num_classes == 0 ? max_label + 1 : num_classes;
  validate_dataset(data);
  return data;
}

void save_idx(std::span<const Sample> samples, const std::filesystem::path& images,
              const std::filesystem::path& labels) {
  if (samples.empty()) throw InvalidArgument("save_idx: no samples");
  const Shape& shape = samples.front().image.shape();
  if (shape.size() != 3 || shape[0] != 1) {
    throw ShapeError("IDX export supports single-channel images only");
  }
  std::string ib, lb;
  append_be32(ib, kImageMagic);
  append_be32(ib, static_cast<std::uint32_t>(samples.size()));
  append_be32(ib, static_cast<std::uint32_t>(shape[1]));
  append_be32(ib, static_cast<std::uint32_t>(shape[2]));
  append_be32(lb, kLabelMagic);
  append_be32(lb, static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    if (s.image.shape() != shape) throw ShapeError("IDX export: inconsistent sample shapes");
    if (s.label > 255) throw InvalidArgument("IDX export: label does not fit a byte");
    for (double v : s.image.values()) {
      ib.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
    lb.push_back(static_cast<char>(s.label));
  }
  write_file_bytes(images, ib);
  write_file_bytes(labels, lb);
}

Dataset make_synthetic(const SyntheticOptions& o) {
  if (o.num_classes < 2 || o.num_classes > kDigits.size()) {
    throw InvalidArgument("synthetic generator supports 2..10 classes");
  }
  if (o.size < 8) throw InvalidArgument("synthetic image size must be at least 8");
  if (o.channels != 1 && o.channels != 3) throw InvalidArgument("synthetic channels must be 1 or 3");
  if (o.count == 0) throw InvalidArgument("synthetic count must be positive");

  Dataset data;
  data.num_classes = o.num_classes;
  data.image_shape = {o.channels, o.size, o.size};
  data.samples.reserve(o.count);
  const double px = static_cast<double>(o.size) / 28.0;

  for (std::size_t id = 0; id < o.count; ++id) {
    Rng rng = make_rng(o.seed, id);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    const std::size_t label = id % o.num_classes;
    std::array<double, 7> intensity{};
    std::vector<std::size_t> lit, unlit;
    for (std::size_t s = 0; s < 7; ++s) {
      if (kDigits[label] >> s & 1U) {
        intensity[s] = uniform(0.7, 1.0);
        lit.push_back(s);
      } else {
        unlit.push_back(s);
      }
    }
    if (unit(rng) < o.weak_probability) {
      intensity[lit[static_cast<std::size_t>(unit(rng) * lit.size()) % lit.size()]] *= uniform(0.0, 0.35);
    }
    if (!unlit.empty() && unit(rng) < o.spurious_probability) {
      intensity[unlit[static_cast<std::size_t>(unit(rng) * unlit.size()) % unlit.size()]] = uniform(0.25, 0.6);
    }

    const double scale = uniform(0.85, 1.1);
    const double width = 0.36 * o.size * scale, height = 0.6 * o.size * scale;
    const double cx = o.size / 2.0 + uniform(-2.5, 2.5) * px;
    const double cy = o.size / 2.0 + uniform(-2.5, 2.5) * px;
    const double slant = uniform(-0.25, 0.25);
    const double half_thickness = uniform(0.9, 1.6) * px;
    auto place = [&](double u, double v, double& x, double& y) {
      y = cy + (v - 0.5) * height;
      x = cx + (u - 0.5) * width - slant * (v - 0.5) * height;
    };
    std::array<double, 3> tint{1.0, 1.0, 1.0};
    if (o.channels == 3) {
      for (auto& t : tint) t = uniform(0.55, 1.0);
    }

    Tensor img(data.image_shape);
    std::normal_distribution<double> noise(0.0, o.noise);
    for (std::size_t y = 0; y < o.size; ++y) {
      for (std::size_t x = 0; x < o.size; ++x) {
        double value = 0.0;
        for (std::size_t s = 0; s < 7; ++s) {
          if (intensity[s] <= 0.0) continue;
          double x0, y0, x1, y1;
          place(kSegments[s].u0, kSegments[s].v0, x0, y0);
          place(kSegments[s].u1, kSegments[s].v1, x1, y1);
          const double d = segment_distance(x + 0.5, y + 0.5, x0, y0, x1, y1);
          const double edge = std::clamp(1.0 - (d - half_thickness), 0.0, 1.0);
          value = std::max(value, intensity[s] * edge);
        }
        for (std::size_t c = 0; c < o.channels; ++c) {
          const double v = value * tint[c] + (o.noise > 0.0 ? noise(rng) : 0.0);
          img.at(c, y, x) = std::clamp(v, 0.0, 1.0);
        }
      }
    }
    data.samples.push_back({std::move(img), label, id});
  }
  return data;
}

}  // namespace apemkit
