#include <doctest.h>

#include <fstream>

#include "apemkit/dataset.hpp"
#include "apemkit/error.hpp"
#include "apemkit/model_io.hpp"
#include "support.hpp"

using namespace apemkit;

namespace {

std::string be32(std::uint32_t v) {
  std::string s(4, '\0');
  for (int i = 0; i < 4; ++i) s[i] = static_cast<char>((v >> (24 - 8 * i)) & 0xff);
  return s;
}

}  // namespace

TEST_CASE("idx files are read with big-endian headers") {
  const auto dir = testing::temp_dir("idx_read");
  std::string images = be32(0x803) + be32(2) + be32(2) + be32(3);
  for (unsigned char b : {0, 255, 51, 102, 153, 204, 10, 20, 30, 40, 50, 60}) images.push_back(static_cast<char>(b));
  std::string labels = be32(0x801) + be32(2);
  labels.push_back(3);
  labels.push_back(1);
  write_file_bytes(dir / "img", images);
  write_file_bytes(dir / "lbl", labels);
  const Dataset d = load_idx(dir / "img", dir / "lbl");
  REQUIRE(d.samples.size() == 2);
  CHECK(d.num_classes == 4);
  CHECK(d.image_shape == Shape{1, 2, 3});
  CHECK(d.samples[0].image[1] == 1.0);
  CHECK(d.samples[0].image[2] == doctest::Approx(0.2));
  CHECK(d.samples[1].label == 1);
  CHECK(d.samples[1].id == 1);

  write_file_bytes(dir / "bad", be32(0x802) + be32(0));
  CHECK_THROWS_AS(load_idx(dir / "bad", dir / "lbl"), FormatError);
  write_file_bytes(dir / "short", images.substr(0, images.size() - 1));
  CHECK_THROWS_AS(load_idx(dir / "short", dir / "lbl"), FormatError);
  CHECK_THROWS_AS(load_idx(dir / "missing", dir / "lbl"), IoError);
}

TEST_CASE("idx export round-trips byte-valued images") {
  const auto dir = testing::temp_dir("idx_roundtrip");
  SyntheticOptions o;
  o.count = 12;
  o.size = 10;
  Dataset d = make_synthetic(o);
  for (auto& s : d.samples) {
    for (double& v : s.image.values()) v = std::round(v * 255.0) / 255.0;
  }
  save_idx(d.samples, dir / "i", dir / "l");
  const Dataset back = load_idx(dir / "i", dir / "l", 10);
  REQUIRE(back.samples.size() == d.samples.size());
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    CHECK(back.samples[i].label == d.samples[i].label);
    CHECK(testing::max_relative_error(back.samples[i].image, d.samples[i].image) < 1e-12);
  }
}

TEST_CASE("synthetic data is seeded and well formed") {
  SyntheticOptions o;
  o.count = 50;
  const Dataset a = make_synthetic(o);
  const Dataset b = make_synthetic(o);
  CHECK(a.samples.size() == 50);
  CHECK(a.image_shape == Shape{1, 28, 28});
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(a.samples[i].image == b.samples[i].image);
    CHECK(a.samples[i].label == i % 10);
  }
  CHECK_NOTHROW(validate_dataset(a));
  o.seed = 2;
  CHECK_FALSE(make_synthetic(o).samples[0].image == a.samples[0].image);

  o.channels = 3;
  o.num_classes = 4;
  const Dataset c = make_synthetic(o);
  CHECK(c.image_shape == Shape{3, 28, 28});
  CHECK(c.num_classes == 4);
  CHECK_NOTHROW(validate_dataset(c));

  o.channels = 2;
  CHECK_THROWS_AS(make_synthetic(o), InvalidArgument);
}

TEST_CASE("dataset validation enforces pixel range and labels") {
  SyntheticOptions o;
  o.count = 3;
  Dataset d = make_synthetic(o);
  d.samples[1].image[5] = 1.5;
  CHECK_THROWS_AS(validate_dataset(d), FormatError);
  d = make_synthetic(o);
  d.samples[2].label = 10;
  CHECK_THROWS_AS(validate_dataset(d), FormatError);
}
