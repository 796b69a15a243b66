#include "fass/flfe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

#include "fass/errors.hpp"
#include "fass/parallel.hpp"
#include "ops_common.hpp"

namespace fass {

namespace {

struct AttnDims {
  int c;      // embedding channels
  int d;      // key dimension
  int depth;  // slices
  int n;      // tokens per slice
  std::size_t plane(int z, int c_index) const {
    return (static_cast<std::size_t>(c_index) * depth + z) * static_cast<std::size_t>(n);
  }
};

// Fixed-order 8-lane dot product.
inline float dot(const float* a, const float* b, std::size_t n) {
  float lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) lane[l] += a[i + l] * b[i + l];
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7])) + tail;
}

// exp for x <= 0, branch-free so the softmax loop vectorizes; relative
// error below 2e-7 on [-87, 0], underflows to 0 below.
inline float exp_nonpositive(float x) {
  x = std::max(x, -87.0f);
  const float k = std::floor(x * 1.44269504088896341f + 0.5f);
  const float r = (x - k * 0.693359375f) + k * 2.12194440e-4f;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  const std::int32_t bits = (static_cast<std::int32_t>(k) + 127) << 23;
  return p * std::bit_cast<float>(bits);
}

inline void axpy(float a, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Token matrices of one slice, stored feature-major ([feature][token]) so the
// token loops are contiguous.
struct SliceState {
  std::size_t n = 0, m = 0;  // queries, keys
  std::vector<float> xt;     // [C][n]
  std::vector<float> vt;     // [C][m], values = raw key tokens
  std::vector<float> qt;     // [d][n]
  std::vector<float> kt;     // [d][m]
  std::vector<float> a;      // [n][m]

  void compute(const float* x, const float* o1, const float* o2, const float* wq, const float* wk,
               const AttnDims& g, int z) {
    n = static_cast<std::size_t>(g.n);
    m = 2 * n;
    xt.resize(g.c * n);
    vt.resize(g.c * m);
    for (int c = 0; c < g.c; ++c) {
      std::copy_n(x + g.plane(z, c), n, xt.data() + c * n);
      std::copy_n(o1 + g.plane(z, c), n, vt.data() + c * m);
      std::copy_n(o2 + g.plane(z, c), n, vt.data() + c * m + n);
    }
    qt.assign(g.d * n, 0.0f);
    kt.assign(g.d * m, 0.0f);
    for (int c = 0; c < g.c; ++c)
      for (int e = 0; e < g.d; ++e) {
        const std::size_t w = static_cast<std::size_t>(c) * g.d + e;
        axpy(wq[w], xt.data() + c * n, qt.data() + e * n, n);
        axpy(wk[w], vt.data() + c * m, kt.data() + e * m, m);
      }
    const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(g.d));
    a.assign(n * m, 0.0f);
    for (std::size_t t = 0; t < n; ++t) {
      float* row = a.data() + t * m;
      for (int e = 0; e < g.d; ++e) axpy(qt[e * n + t] * inv_sqrt_d, kt.data() + e * m, row, m);
      const float mx = *std::max_element(row, row + m);
      for (std::size_t j = 0; j < m; ++j) row[j] = exp_nonpositive(row[j] - mx);
      const float ones[8] = {1, 1, 1, 1, 1, 1, 1, 1};
      float total = 0.0f;
      std::size_t j = 0;
      for (; j + 8 <= m; j += 8) total += dot(row + j, ones, 8);
      for (; j < m; ++j) total += row[j];
      const float inv = 1.0f / total;
      for (std::size_t j = 0; j < m; ++j) row[j] *= inv;
    }
  }
};

AttnDims check_attention_inputs(const Tensor& x, const Tensor& o1, const Tensor& o2, const Tensor& wq,
                                const Tensor& wk) {
  detail::require_rank(x, 4, "attend_residual");
  if (o1.shape() != x.shape() || o2.shape() != x.shape()) {
    throw DimensionError("attend_residual: band shapes " + shape_str(x.shape()) + ", " + shape_str(o1.shape()) +
                         ", " + shape_str(o2.shape()) + " differ");
  }
  detail::require_rank(wq, 2, "attend_residual");
  if (wq.shape() != wk.shape() || wq.dim(0) != x.dim(0)) {
    throw DimensionError("attend_residual: projections " + shape_str(wq.shape()) + " / " + shape_str(wk.shape()) +
                         " do not map the " + std::to_string(x.dim(0)) + "-channel embedding");
  }
  return AttnDims{x.dim(0), wq.dim(1), x.dim(1), x.dim(2) * x.dim(3)};
}

}  // namespace

Tensor attend_residual(const Tensor& x, const Tensor& o1, const Tensor& o2, const Tensor& wq, const Tensor& wk) {
  const AttnDims g = check_attention_inputs(x, o1, o2, wq, wk);
  std::vector<float> out(x.numel());
  const float* xp = x.data().data();
  const float* o1p = o1.data().data();
  const float* o2p = o2.data().data();
  const float* wqp = wq.data().data();
  const float* wkp = wk.data().data();
  parallel_for(0, static_cast<std::size_t>(g.depth), [&](std::size_t zi) {
    const int z = static_cast<int>(zi);
    SliceState st;
    st.compute(xp, o1p, o2p, wqp, wkp, g, z);
    for (int c = 0; c < g.c; ++c) {
      float* o = out.data() + g.plane(z, c);
      const float* v = st.vt.data() + c * st.m;
      for (std::size_t t = 0; t < st.n; ++t) o[t] = st.xt[c * st.n + t] + dot(st.a.data() + t * st.m, v, st.m);
    }
  });

  return detail::make_result(x.shape(), std::move(out), {x, o1, o2, wq, wk}, [g](detail::Node& self) {
    detail::Node& nx = *self.inputs[0];
    detail::Node& no1 = *self.inputs[1];
    detail::Node& no2 = *self.inputs[2];
    detail::Node& nq = *self.inputs[3];
    detail::Node& nk = *self.inputs[4];
    float* gx = detail::grad_ptr(nx);
    float* go1 = detail::grad_ptr(no1);
    float* go2 = detail::grad_ptr(no2);
    const bool want_wq = nq.requires_grad;
    const bool want_wk = nk.requires_grad;
    const std::size_t wsize = static_cast<std::size_t>(g.c) * g.d;
    std::vector<float> part_wq(want_wq ? wsize * g.depth : 0, 0.0f);
    std::vector<float> part_wk(want_wk ? wsize * g.depth : 0, 0.0f);
    const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(g.d));
    const float* wq = nq.data.data();
    const float* wk = nk.data.data();

    parallel_for(0, static_cast<std::size_t>(g.depth), [&](std::size_t zi) {
      const int z = static_cast<int>(zi);
      SliceState st;
      st.compute(nx.data.data(), no1.data.data(), no2.data.data(), wq, wk, g, z);
      const std::size_t n = st.n, m = st.m;
      // Upstream gradient, [C][n].
      std::vector<float> gt(g.c * n);
      for (int c = 0; c < g.c; ++c) std::copy_n(self.grad.data() + g.plane(z, c), n, gt.data() + c * n);

      // dL/dA and the value path; dA is turned into dS in place.
      std::vector<float> gs(n * m, 0.0f);
      std::vector<float> gvt(g.c * m, 0.0f);
      for (std::size_t t = 0; t < n; ++t) {
        float* gsr = gs.data() + t * m;
        const float* row = st.a.data() + t * m;
        for (int c = 0; c < g.c; ++c) {
          const float gtc = gt[c * n + t];
          axpy(gtc, st.vt.data() + c * m, gsr, m);
          axpy(gtc, row, gvt.data() + c * m, m);
        }
        const float r = dot(gsr, row, m);
        for (std::size_t j = 0; j < m; ++j) gsr[j] = row[j] * (gsr[j] - r) * inv_sqrt_d;
      }

      // dQ = dS K, dK = dS^T Q, feature-major.
      std::vector<float> gqt(g.d * n), gkt(g.d * m, 0.0f);
      for (std::size_t t = 0; t < n; ++t) {
        const float* gsr = gs.data() + t * m;
        for (int e = 0; e < g.d; ++e) {
          gqt[e * n + t] = dot(gsr, st.kt.data() + e * m, m);
          axpy(st.qt[e * n + t], gsr, gkt.data() + e * m, m);
        }
      }

      if (gx) {
        for (int c = 0; c < g.c; ++c) {
          float* dst = gx + g.plane(z, c);
          std::vector<float> acc(gt.begin() + static_cast<std::ptrdiff_t>(c * n),
                                 gt.begin() + static_cast<std::ptrdiff_t>((c + 1) * n));
          for (int e = 0; e < g.d; ++e) axpy(wq[static_cast<std::size_t>(c) * g.d + e], gqt.data() + e * n, acc.data(), n);
          for (std::size_t t = 0; t < n; ++t) dst[t] += acc[t];
        }
      }
      if (go1 || go2) {
        for (int c = 0; c < g.c; ++c) {
          float* gv = gvt.data() + c * m;
          for (int e = 0; e < g.d; ++e) axpy(wk[static_cast<std::size_t>(c) * g.d + e], gkt.data() + e * m, gv, m);
          if (go1) axpy(1.0f, gv, go1 + g.plane(z, c), n);
          if (go2) axpy(1.0f, gv + n, go2 + g.plane(z, c), n);
        }
      }
      if (want_wq) {
        float* pw = part_wq.data() + zi * wsize;
        for (int c = 0; c < g.c; ++c)
          for (int e = 0; e < g.d; ++e)
            pw[static_cast<std::size_t>(c) * g.d + e] = dot(st.xt.data() + c * n, gqt.data() + e * n, n);
      }
      if (want_wk) {
        float* pw = part_wk.data() + zi * wsize;
        for (int c = 0; c < g.c; ++c)
          for (int e = 0; e < g.d; ++e)
            pw[static_cast<std::size_t>(c) * g.d + e] = dot(st.vt.data() + c * m, gkt.data() + e * m, m);
      }
    });

    // Slice-ordered reduction keeps the result independent of thread count.
    if (want_wq) {
      float* gwq = detail::grad_ptr(nq);
      for (int z = 0; z < g.depth; ++z)
        for (std::size_t i = 0; i < wsize; ++i) gwq[i] += part_wq[static_cast<std::size_t>(z) * wsize + i];
    }
    if (want_wk) {
      float* gwk = detail::grad_ptr(nk);
      for (int z = 0; z < g.depth; ++z)
        for (std::size_t i = 0; i < wsize; ++i) gwk[i] += part_wk[static_cast<std::size_t>(z) * wsize + i];
    }
  });
}

std::vector<float> attention_matrix(const Tensor& x, const Tensor& o1, const Tensor& o2, const Tensor& wq,
                                    const Tensor& wk, int slice) {
  const AttnDims g = check_attention_inputs(x, o1, o2, wq, wk);
  if (slice < 0 || slice >= g.depth) throw DimensionError("attention_matrix: slice out of range");
  SliceState st;
  st.compute(x.data().data(), o1.data().data(), o2.data().data(), wq.data().data(), wk.data().data(), g, slice);
  return st.a;
}

AttentionParams AttentionParams::init(int channels, std::mt19937_64& rng, int key_dim) {
  AttentionParams p;
  p.channels = channels;
  p.key_dim = key_dim > 0 ? key_dim : channels;
  const double sd = 1.0 / std::sqrt(static_cast<double>(channels));
  for (int b = 0; b < 3; ++b) {
    p.query[static_cast<std::size_t>(b)] = normal_tensor({channels, p.key_dim}, sd, rng);
    p.key[static_cast<std::size_t>(b)] = normal_tensor({channels, p.key_dim}, sd, rng);
    p.fuse[static_cast<std::size_t>(b)] =
        Pointwise(identity_kernel(channels), Tensor::zeros({channels}).set_requires_grad(true));
  }
  return p;
}

void AttentionParams::collect(const std::string& prefix, StateRefs& out) {
  static constexpr const char* kNames[3] = {"H", "V", "D"};
  for (std::size_t b = 0; b < 3; ++b) {
    out.parameters.push_back({prefix + ".query_" + kNames[b], query[b]});
    out.parameters.push_back({prefix + ".key_" + kNames[b], key[b]});
    fuse[b].collect(prefix + ".fuse_" + kNames[b], out);
  }
}

SubbandSet cross_attention_enhance(const SubbandSet& bands, const AttentionParams& params) {
  const Tensor* detail_bands[3] = {&bands.H, &bands.V, &bands.D};
  SubbandSet out = bands;
  Tensor* targets[3] = {&out.H, &out.V, &out.D};
  for (int b = 0; b < 3; ++b) {
    const Tensor& x = *detail_bands[b];
    const Tensor& o1 = *detail_bands[b == 0 ? 1 : 0];
    const Tensor& o2 = *detail_bands[b == 2 ? 1 : 2];
    const std::size_t i = static_cast<std::size_t>(b);
    const Tensor mixed = attend_residual(x, o1, o2, params.query[i], params.key[i]);
    *targets[b] = silu(params.fuse[i].forward(mixed));
  }
  return out;
}

// ---------------------------------------------------------------------------

CbamGate::CbamGate(int channels, std::mt19937_64& rng, int spatial_kernel)
    : res_(channels, rng), spatial_kernel_(spatial_kernel) {
  const int hidden = std::max(1, channels / 2);
  w1_ = normal_tensor({hidden, channels}, std::sqrt(2.0 / channels), rng);
  b1_ = Tensor::zeros({hidden, 1}).set_requires_grad(true);
  w2_ = normal_tensor({channels, hidden}, std::sqrt(1.0 / hidden), rng);
  b2_ = Tensor::zeros({channels, 1}).set_requires_grad(true);
  spatial_w_ = kaiming_kernel(1, 2, spatial_kernel, rng);
  spatial_b_ = Tensor::zeros({1}).set_requires_grad(true);
}

Tensor CbamGate::residual(const Tensor& f, ForwardMode mode) { return res_.forward(f, mode); }

Tensor CbamGate::channel_attention(const Tensor& r) const {
  const int c = r.dim(0);
  auto mlp = [&](const Tensor& v) {
    const Tensor h = relu(add(matmul(w1_, reshape(v, {c, 1})), b1_));
    return add(matmul(w2_, h), b2_);
  };
  return reshape(sigmoid(add(mlp(mean_spatial(r)), mlp(max_spatial(r)))), {c});
}

Tensor CbamGate::spatial_attention(const Tensor& r) const {
  const Tensor stacked = concat0({mean_channels(r), max_channels(r)});
  return sigmoid(add_channel_bias(conv3d(stacked, spatial_w_, 1, spatial_kernel_ / 2), spatial_b_));
}

Tensor CbamGate::gate(const Tensor& f, ForwardMode mode) {
  const Tensor r = residual(f, mode);
  const Shape& shape = r.shape();
  const Tensor mc = expand(reshape(channel_attention(r), {shape[0], 1, 1, 1}), shape);
  const Tensor ms = expand(spatial_attention(mul(r, mc)), shape);
  return mul(mc, ms);
}

void CbamGate::collect(const std::string& prefix, StateRefs& out) {
  res_.collect(prefix + ".res", out);
  out.parameters.push_back({prefix + ".mlp_w1", w1_});
  out.parameters.push_back({prefix + ".mlp_b1", b1_});
  out.parameters.push_back({prefix + ".mlp_w2", w2_});
  out.parameters.push_back({prefix + ".mlp_b2", b2_});
  out.parameters.push_back({prefix + ".spatial_w", spatial_w_});
  out.parameters.push_back({prefix + ".spatial_b", spatial_b_});
}

Tensor flfe_aggregate(const Tensor& f_next, const Tensor& f_enhanced, const Tensor& p, const Pointwise& fuse) {
  if (f_enhanced.shape() != p.shape()) {
    throw DimensionError("flfe_aggregate: feature " + shape_str(f_enhanced.shape()) + " and gate " +
                         shape_str(p.shape()) + " differ");
  }
  if (f_next.rank() != 4 || f_enhanced.rank() != 4) throw DimensionError("flfe_aggregate: expected [C, D, H, W] maps");
  for (int a = 1; a < 4; ++a) {
    if (f_enhanced.dim(a) != 2 * f_next.dim(a)) {
      throw DimensionError("flfe_aggregate: resolution of " + shape_str(f_enhanced.shape()) + " is not exactly twice " +
                           shape_str(f_next.shape()));
    }
  }
  const Tensor gated = avg_pool2(mul(f_enhanced, p));
  return fuse.forward(concat0({f_next, gated}));
}

FlfeLevel::FlfeLevel(int channels, int next_channels, const WaveletBasis& basis, std::mt19937_64& rng)
    : basis_(basis), attention_(AttentionParams::init(channels, rng)), cbam_(channels, rng) {
  // Identity on F_next, He-normal on the gated features.
  std::vector<float> w(static_cast<std::size_t>(next_channels) * (next_channels + channels), 0.0f);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (next_channels + channels)));
  const int cols = next_channels + channels;
  for (int o = 0; o < next_channels; ++o) {
    w[static_cast<std::size_t>(o) * cols + o] = 1.0f;
    for (int i = next_channels; i < cols; ++i) w[static_cast<std::size_t>(o) * cols + i] = static_cast<float>(normal(rng));
  }
  fuse_ = Pointwise(Tensor::from({next_channels, cols, 1, 1, 1}, std::move(w)).set_requires_grad(true),
                    Tensor::zeros({next_channels}).set_requires_grad(true));
}

Tensor FlfeLevel::enhance(const Tensor& f) const {
  return idwt_slicewise(cross_attention_enhance(dwt_slicewise(f, basis_), attention_), basis_);
}

Tensor FlfeLevel::forward(const Tensor& f, const Tensor& f_next, ForwardMode mode) {
  const Tensor enhanced = enhance(f);
  return flfe_aggregate(f_next, enhanced, cbam_.gate(enhanced, mode), fuse_);
}

void FlfeLevel::collect(const std::string& prefix, StateRefs& out) {
  attention_.collect(prefix + ".attention", out);
  cbam_.collect(prefix + ".cbam", out);
  fuse_.collect(prefix + ".fuse", out);
}

}  // namespace fass
