#include <algorithm>
#include <cmath>
#include <random>

#include "baseline_probe.hpp"
#include "doctest.h"
#include "fass/errors.hpp"
#include "fass/ops.hpp"
#include "fass/unet.hpp"
#include "oracles.hpp"

using namespace fass;

namespace {

constexpr ForwardMode kTrainNoUpdate{true, false};

UNetConfig small_config(std::uint64_t seed, int base = 4) {
  UNetConfig c;
  c.seed = seed;
  c.base_channels = base;
  return c;
}

}  // namespace

TEST_CASE("64^3 patch with base 8 follows the halving and doubling schedule") {
  UNet3D net(UNetConfig{});
  std::mt19937_64 rng(1);
  const Tensor patch = oracle::random_tensor({1, 64, 64, 64}, rng);
  NoGradGuard guard;
  const auto features = net.encode(patch, false, kTrainNoUpdate);
  REQUIRE(features.size() == 4u);
  CHECK(features[0].shape() == Shape{8, 64, 64, 64});
  CHECK(features[1].shape() == Shape{16, 32, 32, 32});
  CHECK(features[2].shape() == Shape{32, 16, 16, 16});
  CHECK(features[3].shape() == Shape{64, 8, 8, 8});
  const SegOutput out = net.decode(features, kTrainNoUpdate);
  CHECK(out.seg_logits.shape() == Shape{3, 64, 64, 64});
  CHECK(out.boundary_logits.shape() == Shape{1, 64, 64, 64});
  const auto logits = out.seg_logits.data();
  CHECK(std::all_of(logits.begin(), logits.end(), [](float v) { return std::isfinite(v); }));
}

TEST_CASE("FLFE path keeps the feature schedule") {
  UNet3D net(small_config(2));
  std::mt19937_64 rng(2);
  const Tensor patch = oracle::random_tensor({1, 16, 16, 16}, rng);
  NoGradGuard guard;
  const auto features = net.encode(patch, true, kTrainNoUpdate);
  for (int l = 0; l < 4; ++l) {
    const int side = 16 >> l;
    CHECK(features[static_cast<std::size_t>(l)].shape() == Shape{4 << l, side, side, side});
  }
}

TEST_CASE("forward is deterministic") {
  std::mt19937_64 rng(3);
  const Tensor patch = oracle::random_tensor({1, 16, 16, 16}, rng);
  for (bool flfe : {false, true}) {
    UNet3D a(small_config(7)), b(small_config(7));
    NoGradGuard guard;
    const SegOutput first = a.forward(patch, flfe, kTrainNoUpdate);
    const SegOutput again = a.forward(patch, flfe, kTrainNoUpdate);
    const SegOutput other = b.forward(patch, flfe, kTrainNoUpdate);
    CHECK(first.seg_logits.to_vector() == again.seg_logits.to_vector());
    CHECK(first.seg_logits.to_vector() == other.seg_logits.to_vector());
    CHECK(first.boundary_logits.to_vector() == other.boundary_logits.to_vector());
  }
}

TEST_CASE("flfe off matches the build without optional modules bit for bit") {
  CHECK(modules_compiled());
  CHECK_FALSE(probe::baseline_modules_compiled());
  std::mt19937_64 rng(4);
  const Tensor patch = oracle::random_tensor({1, 16, 16, 16}, rng);
  UNet3D net(small_config(11));
  std::vector<Tensor> features;
  SegOutput seg;
  {
    NoGradGuard guard;
    features = net.encode(patch, false, kTrainNoUpdate);
    seg = net.decode(features, kTrainNoUpdate);
  }
  const probe::BaselineOutputs base = probe::baseline_forward(11, 4, patch);
  for (std::size_t l = 0; l < 4; ++l) CHECK(features[l].to_vector() == base.features[l]);
  CHECK(seg.seg_logits.to_vector() == base.seg_logits);
  CHECK(seg.boundary_logits.to_vector() == base.boundary_logits);
}

TEST_CASE("state registry names every parameter once and includes the FLFE levels") {
  UNet3D net(small_config(5));
  const StateRefs refs = net.state();
  std::size_t backbone = 0;
  for (const auto& p : refs.parameters)
    if (p.name.rfind("flfe", 0) != 0) ++backbone;
  CHECK(backbone < refs.parameters.size());
  for (std::size_t i = 0; i < refs.parameters.size(); ++i)
    for (std::size_t j = i + 1; j < refs.parameters.size(); ++j) CHECK(refs.parameters[i].name != refs.parameters[j].name);
}

TEST_CASE("gradient of the segmentation logits reaches the first encoder kernel") {
  UNet3D net(small_config(6));
  std::mt19937_64 rng(6);
  const Tensor patch = oracle::random_tensor({1, 16, 16, 16}, rng);
  for (bool flfe : {false, true}) {
    CAPTURE(flfe);
    StateRefs refs = net.state();
    for (auto& p : refs.parameters) p.tensor.zero_grad();
    backward(sum(net.forward(patch, flfe, kTrainNoUpdate).seg_logits));
    const Tensor& kernel = refs.parameters.front().tensor;
    CHECK(refs.parameters.front().name == "enc1.conv1");
    double norm = 0.0;
    for (float g : kernel.grad()) norm += std::abs(g);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("first encoder kernel gradient agrees with a finite-difference directional derivative") {
  UNet3D net(small_config(8, 2));
  std::mt19937_64 rng(8);
  const Tensor patch = oracle::random_tensor({1, 16, 16, 16}, rng);
  const Tensor weights = oracle::random_tensor({3, 16, 16, 16}, rng);
  StateRefs refs = net.state();
  Tensor kernel = refs.parameters.front().tensor;
  kernel.zero_grad();
  backward(sum(mul(net.forward(patch, false, kTrainNoUpdate).seg_logits, weights)));
  const std::vector<float> g(kernel.grad().begin(), kernel.grad().end());
  double g2 = 0.0;
  for (float v : g) g2 += static_cast<double>(v) * v;
  REQUIRE(g2 > 0.0);

  // Stepping along the gradient averages over ReLU kinks that defeat
  // elementwise differences in a deep network.
  NoGradGuard guard;
  const std::vector<float> orig = kernel.to_vector();
  const double eta = 1e-3 / std::sqrt(g2);
  auto loss_at = [&](double t) {
    auto k = kernel.mutable_data();
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<float>(orig[i] + t * g[i]);
    return static_cast<double>(sum(mul(net.forward(patch, false, kTrainNoUpdate).seg_logits, weights)).item());
  };
  const double numeric = (loss_at(eta) - loss_at(-eta)) / (2.0 * eta);
  loss_at(0.0);
  CHECK(numeric / g2 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("contract violations") {
  UNet3D net(small_config(9));
  std::mt19937_64 rng(9);
  CHECK_THROWS_AS(net.encode(oracle::random_tensor({1, 12, 16, 16}, rng), false, kTrainNoUpdate), ConfigError);
  CHECK_THROWS_AS(net.encode(oracle::random_tensor({2, 16, 16, 16}, rng), false, kTrainNoUpdate), DimensionError);
  NoGradGuard guard;
  auto features = net.encode(oracle::random_tensor({1, 16, 16, 16}, rng), false, kTrainNoUpdate);
  auto dropped = features;
  dropped.pop_back();
  CHECK_THROWS_AS(net.decode(dropped, kTrainNoUpdate), DimensionError);
  features[2] = Tensor::zeros({5, 4, 4, 4});
  CHECK_THROWS_AS(net.decode(features, kTrainNoUpdate), DimensionError);
  CHECK_THROWS_AS(UNet3D(small_config(1, 0)), ConfigError);
}
