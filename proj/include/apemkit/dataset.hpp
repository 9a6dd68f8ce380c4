#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "apemkit/tensor.hpp"

namespace apemkit {

/// A labelled image with pixels in [0, 1]. `id` is the position in the
/// dataset and keys per-sample random streams.
struct Sample {
  Tensor image;
  std::size_t label = 0;
  std::size_t id = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t num_classes = 0;
  Shape image_shape;
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Bytes are rescaled to [0, 1]. Images become (1, rows, cols).
/// When num_classes is 0 it is inferred as max label + 1.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes = 0);

/// Writes single-channel samples as IDX files; pixels are rounded to bytes.
void save_idx(std::span<const Sample> samples, const std::filesystem::path& images,
              const std::filesystem::path& labels);

/// Seeded generator of seven-segment style glyphs: class c draws digit c's
/// segments with random placement, stroke weakening, spurious strokes and
/// pixel noise, so a fraction of samples is genuinely ambiguous.
struct SyntheticOptions {
  std::size_t num_classes = 10;  ///< 2..10
  std::size_t size = 28;         ///< image height and width, >= 8
  std::size_t channels = 1;      ///< 1 (gray) or 3 (tinted)
  std::size_t count = 1000;
  std::uint64_t seed = 1;
  double noise = 0.08;           ///< std-dev of additive pixel noise
  double weak_probability = 0.12;
  double spurious_probability = 0.12;
};

Dataset make_synthetic(const SyntheticOptions& options);

/// Checks pixel range, label range and shape of every sample.
void validate_dataset(const Dataset& data);

}  // namespace apemkit
