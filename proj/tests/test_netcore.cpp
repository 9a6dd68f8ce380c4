#include <doctest.h>
#include <zlib.h>

#include <cmath>
#include <filesystem>

#include "apemkit/dataset.hpp"
#include "apemkit/error.hpp"
#include "apemkit/model_io.hpp"
#include "apemkit/network.hpp"
#include "apemkit/train.hpp"
#include "support.hpp"

using namespace apemkit;
using testing::max_relative_error;
using testing::random_network;

namespace {

Network dense_net(std::size_t in, std::size_t out, std::vector<double> w, std::vector<double> b) {
  DenseLayer d = make_dense(in, out);
  d.weight = Tensor({out, in}, std::move(w));
  d.bias = Tensor({out}, std::move(b));
  return Network({in}, {d});
}

}  // namespace

TEST_CASE("tensor rejects zero dimensions and length mismatch") {
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.sum() == doctest::Approx(9.0));
  CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  t[2] = NAN;
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(require_finite(t, "t"), NumericError);
}

TEST_CASE("identity dense layer passes the image through") {
  const Network net = dense_net(2, 2, {1, 0, 0, 1}, {0, 0});
  const Prediction p = forward(net, Tensor({2}, {2.0, 1.0}));
  CHECK(p.logits == Tensor({2}, {2.0, 1.0}));
  CHECK(p.predicted_class == 0);
}

TEST_CASE("equal logits resolve to the lowest index") {
  CHECK(make_prediction(Tensor({2}, {0.5, 0.5})).predicted_class == 0);
  CHECK(make_prediction(Tensor({3}, {-1.0, 2.0, 2.0})).predicted_class == 1);
}

TEST_CASE("prediction is invariant under a constant logit shift") {
  Rng rng = make_rng(3, 0);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor logits = testing::random_tensor({5}, rng, -3, 3);
    const auto base = make_prediction(logits);
    for (double& v : logits.values()) v += 7.25;
    const auto shifted = make_prediction(logits);
    CHECK(base.predicted_class == shifted.predicted_class);
    CHECK(base.probabilities.sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (double p : base.probabilities.values()) CHECK((p >= 0.0 && p <= 1.0));
  }
}

TEST_CASE("softmax survives extreme logits") {
  const auto p = make_prediction(Tensor({3}, {1000.0, -1000.0, 999.0}));
  CHECK(p.probabilities.all_finite());
  CHECK(p.probabilities.sum() == doctest::Approx(1.0));
  CHECK(loss(p, 1) > 1000.0);
  CHECK(std::isfinite(loss(p, 1)));
}

TEST_CASE("loss matches the closed forms") {
  Prediction one;
  one.probabilities = Tensor({2}, {1.0, 0.0});
  one.logits = Tensor({2}, {50.0, -50.0});
  CHECK(loss(one, 0) == 0.0);
  const auto half = make_prediction(Tensor({2}, {0.3, 0.3}));
  CHECK(loss(half, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(loss(half, 2), InvalidArgument);

  const auto p = make_prediction(Tensor({3}, {0.2, 1.7, -0.4}));
  CHECK(loss(p, p.predicted_class) == doctest::Approx(-std::log(p.confidence)).epsilon(1e-14));
}

TEST_CASE("forward matches an independent loop evaluator on random nets") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Network net = random_network(seed);
    Rng rng = make_rng(seed, 99);
    const Tensor image = testing::random_tensor(net.input_shape(), rng, 0.0, 1.0);
    const auto logits = testing::naive_logits(net, image);
    const auto p = forward(net, image);
    REQUIRE(p.logits.size() == logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      CHECK(p.logits[i] == doctest::Approx(logits[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward rejects a wrongly shaped image") {
  const Network net = random_network(1);
  CHECK_THROWS_AS(forward(net, Tensor({1, 3, 3})), ShapeError);
}

TEST_CASE("network construction checks the layer graph") {
  CHECK_THROWS_AS(Network({4}, {}), ShapeError);
  CHECK_THROWS_AS(Network({4}, {ReluLayer{}}), ShapeError);
  CHECK_THROWS_AS(Network({4}, {make_dense(3, 2)}), ShapeError);
  CHECK_THROWS_AS(Network({1, 4, 4}, {make_dense(16, 2)}), ShapeError);
  CHECK_NOTHROW(Network({1, 4, 4}, {FlattenLayer{}, make_dense(16, 2)}));
  CHECK_THROWS_AS(Network({1, 2, 2}, {make_conv2d(1, 1, 3), FlattenLayer{}, make_dense(1, 2)}),
                  ShapeError);
}

TEST_CASE("dense input gradient has the closed form (p - onehot) W") {
  const Network net = dense_net(2, 2, {0.5, -1.0, 2.0, 0.25}, {0.1, -0.2});
  const Tensor x({2}, {0.3, 0.8});
  const double z0 = 0.5 * 0.3 - 1.0 * 0.8 + 0.1;
  const double z1 = 2.0 * 0.3 + 0.25 * 0.8 - 0.2;
  const double p0 = std::exp(z0) / (std::exp(z0) + std::exp(z1));
  const double p1 = 1.0 - p0;
  const double d0 = p0 - 1.0, d1 = p1;  // label 0
  const Tensor g = input_gradient(net, x, 0);
  CHECK(g[0] == doctest::Approx(d0 * 0.5 + d1 * 2.0).epsilon(1e-14));
  CHECK(g[1] == doctest::Approx(d0 * -1.0 + d1 * 0.25).epsilon(1e-14));
}

TEST_CASE("input gradient matches central differences on random nets") {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 30 && seed < 400; ++seed) {
    const Network net = random_network(seed);
    Rng rng = make_rng(seed, 5);
    const Tensor image = testing::random_tensor(net.input_shape(), rng, 0.0, 1.0);
    if (!testing::locally_smooth(net, image, 1e-3)) continue;
    const std::size_t label = seed % net.num_classes();
    const Tensor analytic = input_gradient(net, image, label);
    const Tensor numeric = testing::numeric_loss_gradient(net, image, label, 1e-4);
    CHECK(max_relative_error(analytic, numeric) < 1e-4);
    ++checked;
  }
  CHECK(checked == 30);
}

TEST_CASE("zero image through a relu-only path keeps only the final bias terms") {
  // With a zero input every relu is inactive, so no path reaches the pixels.
  DenseLayer d1 = make_dense(3, 2);
  d1.weight = Tensor({2, 3}, {1, -2, 0.5, 0.3, 0.7, -1});
  DenseLayer d2 = make_dense(2, 2);
  d2.weight = Tensor({2, 2}, {1, 2, -1, 0.5});
  d2.bias = Tensor({2}, {0.4, -0.1});
  const Network net({3}, {d1, ReluLayer{}, d2});
  const Tensor zero({3}, 0.0);
  const Tensor g = input_gradient(net, zero, 1);
  CHECK(g.max_abs() == 0.0);
  // the loss itself is driven by the final bias only
  CHECK(loss(forward(net, zero), 1) == doctest::Approx(testing::naive_loss({0.4, -0.1}, 1)));
}

TEST_CASE("maxpool routes the gradient to the first maximal cell") {
  // 1x2x2 input, all equal: the top-left cell wins.
  DenseLayer d = make_dense(1, 2);
  d.weight = Tensor({2, 1}, {1.0, -1.0});
  const Network net({1, 2, 2}, {MaxPool2dLayer{}, FlattenLayer{}, d});
  const Tensor g = input_gradient(net, Tensor({1, 2, 2}, 0.5), 0);
  CHECK(g[0] != 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 0.0);
}

TEST_CASE("guided gradient equals the plain gradient without relus") {
  const Network net = dense_net(3, 2, {1, -2, 0.5, 0.3, 0.7, -1}, {0.1, 0.2});
  const Tensor x({3}, {0.2, 0.4, 0.9});
  CHECK(guided_input_gradient(net, x, 1) == input_gradient(net, x, 1));
}

TEST_CASE("guided gradient matches a hand traced two-layer net") {
  // x (2) -> dense W1 (2x2) -> relu -> dense W2 (2x2). Label 0.
  DenseLayer d1 = make_dense(2, 2);
  d1.weight = Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0});
  DenseLayer d2 = make_dense(2, 2);
  d2.weight = Tensor({2, 2}, {1.0, -1.0, 0.0, 0.0});
  const Network net({2}, {d1, ReluLayer{}, d2});
  const Tensor x({2}, {0.5, 0.25});
  // hidden h = x (both active); logits = (h0 - h1, 0) = (0.25, 0)
  const double p0 = std::exp(0.25) / (std::exp(0.25) + 1.0);
  const double d0 = p0 - 1.0;  // dJ/dz0 < 0, dJ/dz1 = 1 - p0 (times weight 0)
  // dJ/dh = W2^T dJ/dz = (d0 * 1, d0 * -1) = (negative, positive)
  const Tensor plain = input_gradient(net, x, 0);
  CHECK(plain[0] == doctest::Approx(d0));
  CHECK(plain[1] == doctest::Approx(-d0));
  const Tensor guided = guided_input_gradient(net, x, 0);
  CHECK(guided[0] == 0.0);  // negative backward entry blocked at the relu
  CHECK(guided[1] == doctest::Approx(-d0));
}

TEST_CASE("guided gradient equals the plain one when backward signals are positive") {
  DenseLayer d1 = make_dense(2, 2);
  d1.weight = Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0});
  DenseLayer d2 = make_dense(2, 2);
  d2.weight = Tensor({2, 2}, {-1.0, -1.0, 0.0, 0.0});
  const Network net({2}, {d1, ReluLayer{}, d2});
  const Tensor x({2}, {0.5, 0.25});
  CHECK(guided_input_gradient(net, x, 0) == input_gradient(net, x, 0));
}

TEST_CASE("feature map gradient of a linear head equals the dense weight row") {
  Conv2dLayer conv = make_conv2d(1, 2, 2);
  Rng rng = make_rng(4, 0);
  testing::fill_normal(conv.weight, rng, 1.0);
  DenseLayer d = make_dense(2 * 2 * 2, 3);
  testing::fill_normal(d.weight, rng, 1.0);
  const Network net({1, 3, 3}, {conv, FlattenLayer{}, d});
  const Tensor x = testing::random_tensor({1, 3, 3}, rng, 0, 1);
  const auto fm = feature_map_gradient(net, x, 2, 0);
  CHECK(fm.activations.shape() == Shape{2, 2, 2});
  for (std::size_t i = 0; i < 8; ++i) CHECK(fm.gradient[i] == doctest::Approx(d.weight[2 * 8 + i]));
  CHECK_THROWS_AS(feature_map_gradient(net, x, 0, 1), InvalidArgument);
}

TEST_CASE("feature map gradient matches differences of the sub-network above it") {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 15 && seed < 200; ++seed) {
    const Network net = random_network(seed);
    Rng rng = make_rng(seed, 11);
    const Tensor image = testing::random_tensor(net.input_shape(), rng, 0, 1);
    if (!testing::locally_smooth(net, image, 1e-3)) continue;
    const std::size_t cls = seed % net.num_classes();
    const auto fm = feature_map_gradient(net, image, cls, 0);
    // sub-network: the layers after the conv, fed the perturbed activation
    std::vector<Layer> rest(net.layers().begin() + 1, net.layers().end());
    const Network above(fm.activations.shape(), rest);
    Tensor a = fm.activations;
    Tensor numeric(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double orig = a[i];
      a[i] = orig + 1e-4;
      const double up = testing::naive_logits(above, a)[cls];
      a[i] = orig - 1e-4;
      const double down = testing::naive_logits(above, a)[cls];
      a[i] = orig;
      numeric[i] = (up - down) / 2e-4;
    }
    CHECK(max_relative_error(fm.gradient, numeric) < 1e-4);
    ++checked;
  }
  CHECK(checked == 15);
}

TEST_CASE("zero final weights give a zero feature map gradient") {
  Network net = random_network(2);
  std::get<DenseLayer>(net.mutable_layers().back()).weight =
      Tensor(std::get<DenseLayer>(net.layers().back()).weight.shape(), 0.0);
  Rng rng = make_rng(2, 1);
  const Tensor x = testing::random_tensor(net.input_shape(), rng, 0, 1);
  CHECK(feature_map_gradient(net, x, 0, 0).gradient.max_abs() == 0.0);
}

TEST_CASE("model files round-trip bit-exactly") {
  const Network net = random_network(12);
  const std::string bytes = serialize_model(net);
  const Network back = parse_model(bytes);
  CHECK(back == net);
  CHECK(serialize_model(back) == bytes);

  const auto dir = testing::temp_dir("model_io");
  save_model(dir / "m.bin", net);
  CHECK(load_model(dir / "m.bin") == net);
  CHECK_THROWS_AS(load_model(dir / "missing.bin"), IoError);
}

TEST_CASE("damaged model files are rejected with specific errors") {
  const Network net = random_network(13);
  const std::string bytes = serialize_model(net);

  CHECK_THROWS_AS(parse_model(bytes.substr(0, bytes.size() - 9)), ChecksumError);
  CHECK_THROWS_AS(parse_model(bytes.substr(0, 10)), ChecksumError);

  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x20;
  CHECK_THROWS_AS(parse_model(flipped), ChecksumError);

  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(parse_model(magic), FormatError);
}

namespace {

// Rewrites the manifest text and fixes up length and checksum so that only
// the intended defect remains.
std::string patch_manifest(const Network& net, const std::string& from, const std::string& to,
                           std::uint32_t version = kModelFormatVersion) {
  std::string manifest = model_manifest(net);
  const auto at = manifest.find(from);
  REQUIRE(at != std::string::npos);
  manifest.replace(at, from.size(), to);
  const std::string original = serialize_model(net);
  const std::string old_manifest = model_manifest(net);
  std::string out = original.substr(0, 8);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((version >> (8 * i)) & 0xff));
  const std::uint64_t n = manifest.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  out += manifest;
  const std::size_t tail_start = 8 + 4 + 8 + old_manifest.size();
  out += original.substr(tail_start, original.size() - tail_start - 4);
  const auto crc = static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(out.data()), static_cast<uInt>(out.size())));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((crc >> (8 * i)) & 0xff));
  return out;
}

}  // namespace

TEST_CASE("model manifest defects name the problem") {
  const Network net = random_network(14);
  try {
    parse_model(patch_manifest(net, "\"conv2d\"", "\"conv3d\""));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("conv3d") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_model(patch_manifest(net, "\"conv2d\"", "\"conv2d\"", 99)), VersionError);
  // turning the hidden dense layer into a relu breaks the shape chain
  try {
    parse_model(patch_manifest(net, "\"dense\"", "\"relu\""));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("malformed layer graph") != std::string::npos);
  }
}

TEST_CASE("model manifest is readable structured text") {
  const Network net = random_network(15);
  const std::string manifest = model_manifest(net);
  CHECK(manifest.find("\"layers\"") != std::string::npos);
  CHECK(manifest.find("\"stride\"") != std::string::npos);
  CHECK(manifest.find("\"input_shape\"") != std::string::npos);
}

TEST_CASE("zero epochs leave the parameters unchanged") {
  SyntheticOptions o;
  o.count = 20;
  const Dataset data = make_synthetic(o);
  const Network net = make_desk_cnn(data.image_shape, data.num_classes, 3);
  TrainOptions t;
  t.epochs = 0;
  CHECK(train(net, data.samples, t) == net);
}

TEST_CASE("training is bit-identical for a fixed seed") {
  SyntheticOptions o;
  o.count = 64;
  o.size = 12;
  const Dataset data = make_synthetic(o);
  const Network net = make_desk_cnn(data.image_shape, data.num_classes, 3);
  TrainOptions t;
  t.epochs = 1;
  t.seed = 9;
  const Network a = train(net, data.samples, t);
  const Network b = train(net, data.samples, t);
  CHECK(a == b);
  CHECK_FALSE(a == net);
  t.seed = 10;
  CHECK_FALSE(train(net, data.samples, t) == a);
}

TEST_CASE("training refuses empty data and reports non-finite loss") {
  const Network net = dense_net(2, 2, {1, 0, 0, 1}, {0, 0});
  CHECK_THROWS_AS(train(net, std::span<const Sample>{}, TrainOptions{}), InvalidArgument);
  std::vector<Sample> bad{{Tensor({2}, {8.0, 8.0}), 0, 0}};
  TrainOptions t;
  t.learning_rate = 1e308;
  t.epochs = 5;
  try {
    train(net, bad, t);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

namespace {

// Two Gaussian blobs in 2-D, labelled by side.
std::vector<Sample> blobs(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> noise(0.0, 0.08);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    const double cx = label ? 0.75 : 0.25, cy = label ? 0.3 : 0.7;
    out.push_back({Tensor({2}, {cx + noise(rng), cy + noise(rng)}), label, i});
  }
  return out;
}

// Classic perceptron with bias; returns true once an epoch has no mistakes.
bool perceptron_separates(const std::vector<Sample>& data, std::size_t max_epochs) {
  double w0 = 0, w1 = 0, b = 0;
  for (std::size_t e = 0; e < max_epochs; ++e) {
    bool clean = true;
    for (const auto& s : data) {
      const double y = s.label ? 1.0 : -1.0;
      if (y * (w0 * s.image[0] + w1 * s.image[1] + b) <= 0) {
        w0 += y * s.image[0];
        w1 += y * s.image[1];
        b += y;
        clean = false;
      }
    }
    if (clean) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("separable blobs are learned to 99 percent") {
  const auto data = blobs(200, 21);
  REQUIRE(perceptron_separates(data, 10000));
  Network net = dense_net(2, 2, {0, 0, 0, 0}, {0, 0});
  initialize_parameters(net, 4);
  TrainOptions t;
  t.epochs = 50;
  t.learning_rate = 0.5;
  t.batch_size = 8;
  const Network trained = train(net, data, t);
  CHECK(accuracy(trained, data) >= 0.99);
}

TEST_CASE("accuracy counts matching predictions") {
  const Network net = dense_net(2, 2, {1, 0, 0, 1}, {0, 0});
  std::vector<Sample> s{{Tensor({2}, {1.0, 0.0}), 0, 0},
                        {Tensor({2}, {0.0, 1.0}), 0, 1},
                        {Tensor({2}, {0.2, 0.9}), 1, 2},
                        {Tensor({2}, {0.5, 0.5}), 0, 3}};
  CHECK(accuracy(net, s) == doctest::Approx(0.75));
}

TEST_CASE("desk CNN has the expected layout") {
  const Network net = make_desk_cnn({1, 28, 28}, 10, 1);
  CHECK(net.num_classes() == 10);
  CHECK(net.last_conv_index() == std::optional<std::size_t>(3));
  CHECK(net.layer_output_shape(5) == Shape{16, 7, 7});
  CHECK_THROWS_AS(make_desk_cnn({1, 10, 10}, 10, 1), ShapeError);
}
