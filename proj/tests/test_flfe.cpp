#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fass/errors.hpp"
#include "fass/flfe.hpp"
#include "oracles.hpp"

using namespace fass;

namespace {

constexpr ForwardMode kTrainNoUpdate{true, false};

// X + softmax(Q K^T / sqrt(d)) V for a single slice, from generic primitives.
Tensor attend_by_primitives(const Tensor& x, const Tensor& o1, const Tensor& o2, const Tensor& wq, const Tensor& wk) {
  const int c = x.dim(0);
  const int n = x.dim(2) * x.dim(3);
  auto tokens = [&](const Tensor& t) { return transpose(reshape(t, {c, n})); };
  const Tensor xs = tokens(x);
  const Tensor kv = concat0({tokens(o1), tokens(o2)});
  const Tensor q = matmul(xs, wq);
  const Tensor k = matmul(kv, wk);
  const Tensor a = softmax(scale(matmul(q, transpose(k)), 1.0f / std::sqrt(static_cast<float>(wq.dim(1)))), 1);
  return reshape(transpose(add(xs, matmul(a, kv))), x.shape());
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace

TEST_CASE("attention rows are probability distributions") {
  std::mt19937_64 rng(1);
  const Shape s{4, 3, 8, 8};
  const Tensor x = oracle::random_tensor(s, rng), o1 = oracle::random_tensor(s, rng), o2 = oracle::random_tensor(s, rng);
  const Tensor wq = oracle::random_tensor({4, 4}, rng, -2, 2), wk = oracle::random_tensor({4, 4}, rng, -2, 2);
  for (int z = 0; z < 3; ++z) {
    const std::vector<float> a = attention_matrix(x, o1, o2, wq, wk, z);
    REQUIRE(a.size() == 64u * 128u);
    for (int t = 0; t < 64; ++t) {
      double total = 0.0;
      for (int j = 0; j < 128; ++j) {
        const float v = a[static_cast<std::size_t>(t) * 128 + j];
        CHECK(v > 0.0f);
        total += v;
      }
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("fused attention equals the primitive composition, values and gradients") {
  std::mt19937_64 rng(2);
  const Shape s{3, 1, 4, 6};
  std::vector<Tensor> fused_in = {oracle::random_tensor(s, rng), oracle::random_tensor(s, rng),
                                  oracle::random_tensor(s, rng), oracle::random_tensor({3, 2}, rng),
                                  oracle::random_tensor({3, 2}, rng)};
  std::vector<Tensor> ref_in;
  for (const Tensor& t : fused_in) ref_in.push_back(Tensor::from(t.shape(), t.to_vector()));
  for (auto* set : {&fused_in, &ref_in})
    for (Tensor& t : *set) t.set_requires_grad(true);
  const Tensor weights = oracle::random_tensor(s, rng);

  const Tensor fused = attend_residual(fused_in[0], fused_in[1], fused_in[2], fused_in[3], fused_in[4]);
  const Tensor ref = attend_by_primitives(ref_in[0], ref_in[1], ref_in[2], ref_in[3], ref_in[4]);
  CHECK(max_abs_diff(fused.data(), ref.data()) < 1e-5);
  backward(sum(mul(fused, weights)));
  backward(sum(mul(ref, weights)));
  for (std::size_t i = 0; i < fused_in.size(); ++i) {
    CAPTURE(i);
    CHECK(max_abs_diff(fused_in[i].grad(), ref_in[i].grad()) < 1e-4);
  }
}

TEST_CASE("fused attention passes a finite-difference check across slices") {
  std::mt19937_64 rng(3);
  const Shape s{2, 2, 2, 4};
  const Tensor w = oracle::random_tensor(s, rng);
  const double err = oracle::gradient_relative_error(
      [&](const std::vector<Tensor>& in) { return sum(mul(attend_residual(in[0], in[1], in[2], in[3], in[4]), w)); },
      {oracle::random_tensor(s, rng), oracle::random_tensor(s, rng), oracle::random_tensor(s, rng),
       oracle::random_tensor({2, 3}, rng), oracle::random_tensor({2, 3}, rng)});
  CHECK(err < 1e-2);
}

TEST_CASE("enhancement keeps shapes, leaves L alone and maps zero details to zero") {
  std::mt19937_64 rng(4);
  const AttentionParams params = AttentionParams::init(4, rng);
  SubbandSet bands;
  bands.L = oracle::random_tensor({4, 2, 8, 8}, rng);
  bands.H = oracle::random_tensor({4, 2, 8, 8}, rng);
  bands.V = oracle::random_tensor({4, 2, 8, 8}, rng);
  bands.D = oracle::random_tensor({4, 2, 8, 8}, rng);
  const SubbandSet out = cross_attention_enhance(bands, params);
  CHECK(out.L.node() == bands.L.node());
  for (Subband b : {Subband::H, Subband::V, Subband::D}) CHECK(out.band(b).shape() == bands.band(b).shape());

  SubbandSet zeros = bands;
  zeros.H = zeros.V = zeros.D = Tensor::zeros({4, 2, 8, 8});
  const SubbandSet z = cross_attention_enhance(zeros, params);
  for (Subband b : {Subband::H, Subband::V, Subband::D})
    for (float v : z.band(b).data()) CHECK(v == 0.0f);
}

TEST_CASE("enhanced bands receive gradient from every detail band") {
  std::mt19937_64 rng(5);
  const AttentionParams params = AttentionParams::init(2, rng);
  SubbandSet bands;
  bands.L = oracle::random_tensor({2, 1, 4, 4}, rng);
  bands.H = oracle::random_tensor({2, 1, 4, 4}, rng).set_requires_grad(true);
  bands.V = oracle::random_tensor({2, 1, 4, 4}, rng).set_requires_grad(true);
  bands.D = oracle::random_tensor({2, 1, 4, 4}, rng).set_requires_grad(true);
  const SubbandSet out = cross_attention_enhance(bands, params);
  backward(sum(out.H));
  for (const Tensor* t : {&bands.H, &bands.V, &bands.D}) {
    double norm = 0.0;
    for (float g : t->grad()) norm += std::abs(g);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("CBAM gate range, shape and pooling symmetry") {
  std::mt19937_64 rng(6);
  CbamGate gate(4, rng);
  const Tensor f = oracle::random_tensor({4, 4, 6, 6}, rng, -3, 3);
  const Tensor p = gate.gate(f, kTrainNoUpdate);
  CHECK(p.shape() == f.shape());
  for (float v : p.data()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }

  const Tensor r = oracle::random_tensor({4, 4, 6, 6}, rng, -3, 3);
  const std::size_t spatial = 4 * 6 * 6;
  std::vector<std::size_t> perm(spatial);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<float> permuted(r.numel());
  const auto rv = r.data();
  for (int c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < spatial; ++i) permuted[c * spatial + i] = rv[c * spatial + perm[i]];
  const Tensor a = gate.channel_attention(r);
  const Tensor b = gate.channel_attention(Tensor::from(r.shape(), permuted));
  CHECK(a.shape() == Shape{4});
  CHECK(max_abs_diff(a.data(), b.data()) < 1e-6);
}

TEST_CASE("aggregation contracts") {
  std::mt19937_64 rng(7);
  const WaveletBasis haar = WaveletBasis::named("haar");
  FlfeLevel level(2, 4, haar, rng);
  const Tensor f = oracle::random_tensor({2, 8, 8, 8}, rng);
  const Tensor f_next = oracle::random_tensor({4, 4, 4, 4}, rng);

  const Tensor zero_gate = Tensor::zeros(f.shape());
  const Tensor out = flfe_aggregate(f_next, f, zero_gate, level.fuse());
  CHECK(out.shape() == f_next.shape());
  // Gate annihilated: only the F_next columns of the fusion act.
  const auto w = level.fuse().weight().data();
  const auto b = level.fuse().bias().data();
  const auto fn = f_next.data();
  for (int o = 0; o < 4; ++o)
    for (std::size_t i = 0; i < 64; ++i) {
      double expect = b[static_cast<std::size_t>(o)];
      for (int k = 0; k < 4; ++k) expect += w[static_cast<std::size_t>(o) * 6 + k] * fn[static_cast<std::size_t>(k) * 64 + i];
      CHECK(out.data()[static_cast<std::size_t>(o) * 64 + i] == doctest::Approx(expect).epsilon(1e-5));
    }

  CHECK_THROWS_AS(flfe_aggregate(oracle::random_tensor({4, 2, 2, 2}, rng), f, zero_gate, level.fuse()),
                  DimensionError);
  CHECK_THROWS_AS(flfe_aggregate(f_next, f, Tensor::zeros({2, 8, 8, 4}), level.fuse()), DimensionError);
  CHECK(level.forward(f, f_next, kTrainNoUpdate).shape() == f_next.shape());
}

TEST_CASE("gradient reaches the enhanced features") {
  std::mt19937_64 rng(8);
  FlfeLevel level(2, 2, WaveletBasis::named("haar"), rng);
  const Tensor p = oracle::random_tensor({2, 4, 4, 4}, rng, 0.1f, 0.9f);
  const Tensor f_next = oracle::random_tensor({2, 2, 2, 2}, rng);
  const Tensor weights = oracle::random_tensor({2, 2, 2, 2}, rng);
  Tensor f = oracle::random_tensor({2, 4, 4, 4}, rng);
  auto loss = [&](const Tensor& x) { return sum(mul(flfe_aggregate(f_next, x, p, level.fuse()), weights)).item(); };
  NoGradGuard guard;
  double sensitivity = 0.0;
  for (std::size_t i = 0; i < f.numel(); i += 7) {
    const float orig = f.mutable_data()[i];
    f.mutable_data()[i] = orig + 1e-2f;
    const double up = loss(f);
    f.mutable_data()[i] = orig - 1e-2f;
    const double down = loss(f);
    f.mutable_data()[i] = orig;
    sensitivity += std::abs(up - down);
  }
  CHECK(sensitivity > 1e-4);
}

TEST_CASE("full FLFE path passes a finite-difference check on a 1-channel 8x8x4 map") {
  for (const char* name : {"haar", "db2"}) {
    CAPTURE(name);
    std::mt19937_64 rng(9);
    FlfeLevel level(1, 2, WaveletBasis::named(name), rng);
    const Tensor weights = oracle::random_tensor({2, 2, 4, 4}, rng);
    const double err = oracle::gradient_relative_error(
        [&](const std::vector<Tensor>& in) { return sum(mul(level.forward(in[0], in[1], kTrainNoUpdate), weights)); },
        {oracle::random_tensor({1, 4, 8, 8}, rng), oracle::random_tensor({2, 2, 4, 4}, rng)});
    CHECK(err < 1e-2);
  }
}

TEST_CASE("FLFE parameters are all registered and reach the loss") {
  std::mt19937_64 rng(10);
  FlfeLevel level(2, 4, WaveletBasis::named("db2"), rng);
  StateRefs refs;
  level.collect("flfe1", refs);
  CHECK(refs.parameters.size() == 3 * 4 + 2 * 3 + 6 + 2);
  CHECK(refs.buffers.size() == 4);
  const Tensor out = level.forward(oracle::random_tensor({2, 4, 8, 8}, rng), oracle::random_tensor({4, 2, 4, 4}, rng),
                                   kTrainNoUpdate);
  backward(sum(mul(out, out)));
  for (const auto& p : refs.parameters) {
    CAPTURE(p.name);
    CHECK(p.tensor.has_grad());
  }
}
