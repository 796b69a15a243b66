#include <algorithm>
#include <cmath>

#include "fass/ops.hpp"
#include "fass/parallel.hpp"
#include "ops_common.hpp"

namespace fass {

using detail::grad_ptr;
using detail::Node;

Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const int m = a.dim(0);
  const int k = a.dim(1);
  const int n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const float* av = a.data().data();
  const float* bv = b.data().data();
  std::vector<float> out(static_cast<std::size_t>(m) * n, 0.0f);
  for (int i = 0; i < m; ++i) {
    float* row = out.data() + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const float s = av[static_cast<std::size_t>(i) * k + p];
      const float* brow = bv + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return detail::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const float* g = self.grad.data();
    if (float* ga = grad_ptr(na)) {
      // dA = G * B^T
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          float acc = 0.0f;
          const float* brow = nb.data.data() + static_cast<std::size_t>(p) * n;
          const float* grow = g + static_cast<std::size_t>(i) * n;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[static_cast<std::size_t>(i) * k + p] += acc;
        }
    }
    if (float* gb = grad_ptr(nb)) {
      // dB = A^T * G
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          const float s = na.data[static_cast<std::size_t>(i) * k + p];
          const float* grow = g + static_cast<std::size_t>(i) * n;
          float* brow = gb + static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) brow[j] += s * grow[j];
        }
    }
  });
}

// ---------------------------------------------------------------------------
// conv3d
// ---------------------------------------------------------------------------

namespace {

struct ConvGeom {
  int cin, cout, d, h, w, k, stride, pad, od, oh, ow;
  std::size_t in_plane() const { return static_cast<std::size_t>(d) * h * w; }
  std::size_t out_plane() const { return static_cast<std::size_t>(od) * oh * ow; }
  std::size_t kvol() const { return static_cast<std::size_t>(k) * k * k; }
};

int conv_out_dim(int n, int k, int stride, int pad) {
  const int span = n + 2 * pad - k;
  if (span < 0 || span % stride != 0) {
    throw ConfigError("conv3d: (" + std::to_string(n) + " + 2*" + std::to_string(pad) + " - " + std::to_string(k) +
                      ") is not divisible by stride " + std::to_string(stride));
  }
  return span / stride + 1;
}

// Valid output range [lo, hi) such that o*stride + offset lies in [0, n).
inline void valid_range(int offset, int n, int out, int stride, int& lo, int& hi) {
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  hi = (n - 1 - offset) < 0 ? 0 : std::min(out, (n - 1 - offset) / stride + 1);
  if (hi < lo) hi = lo;
}

// Dot product with eight fixed partial sums; the order depends only on len.
inline float dot8(const float* a, const float* b, int len) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= len; i += 8)
    for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  float tail = 0.0f;
  for (; i < len; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

void conv_forward(const ConvGeom& g, const float* x, const float* kernel, float* out) {
  parallel_for(0, static_cast<std::size_t>(g.cout), [&](std::size_t co) {
    float* obase = out + co * g.out_plane();
    for (int ci = 0; ci < g.cin; ++ci) {
      const float* xbase = x + static_cast<std::size_t>(ci) * g.in_plane();
      const float* kbase = kernel + (co * g.cin + ci) * g.kvol();
      for (int kd = 0; kd < g.k; ++kd)
        for (int kh = 0; kh < g.k; ++kh)
          for (int kw = 0; kw < g.k; ++kw) {
            const float wgt = kbase[(kd * g.k + kh) * g.k + kw];
            int d0, d1, h0, h1, w0, w1;
            valid_range(kd - g.pad, g.d, g.od, g.stride, d0, d1);
            valid_range(kh - g.pad, g.h, g.oh, g.stride, h0, h1);
            valid_range(kw - g.pad, g.w, g.ow, g.stride, w0, w1);
            for (int od = d0; od < d1; ++od) {
              const int id = od * g.stride + kd - g.pad;
              for (int oh = h0; oh < h1; ++oh) {
                const int ih = oh * g.stride + kh - g.pad;
                float* orow = obase + (static_cast<std::size_t>(od) * g.oh + oh) * g.ow;
                const float* irow = xbase + (static_cast<std::size_t>(id) * g.h + ih) * g.w;
                if (g.stride == 1) {
                  const float* src = irow + (w0 + kw - g.pad);
                  float* dst = orow + w0;
                  for (int i = 0; i < w1 - w0; ++i) dst[i] += wgt * src[i];
                } else {
                  for (int ow = w0; ow < w1; ++ow) orow[ow] += wgt * irow[ow * g.stride + kw - g.pad];
                }
              }
            }
          }
    }
  });
}

void conv_backward_input(const ConvGeom& g, const float* grad_out, const float* kernel, float* grad_x) {
  parallel_for(0, static_cast<std::size_t>(g.cin), [&](std::size_t ci) {
    float* gxbase = grad_x + ci * g.in_plane();
    for (int co = 0; co < g.cout; ++co) {
      const float* gbase = grad_out + static_cast<std::size_t>(co) * g.out_plane();
      const float* kbase = kernel + (static_cast<std::size_t>(co) * g.cin + ci) * g.kvol();
      for (int kd = 0; kd < g.k; ++kd)
        for (int kh = 0; kh < g.k; ++kh)
          for (int kw = 0; kw < g.k; ++kw) {
            const float wgt = kbase[(kd * g.k + kh) * g.k + kw];
            int d0, d1, h0, h1, w0, w1;
            valid_range(kd - g.pad, g.d, g.od, g.stride, d0, d1);
            valid_range(kh - g.pad, g.h, g.oh, g.stride, h0, h1);
            valid_range(kw - g.pad, g.w, g.ow, g.stride, w0, w1);
            for (int od = d0; od < d1; ++od) {
              const int id = od * g.stride + kd - g.pad;
              for (int oh = h0; oh < h1; ++oh) {
                const int ih = oh * g.stride + kh - g.pad;
                const float* grow = gbase + (static_cast<std::size_t>(od) * g.oh + oh) * g.ow;
                float* xrow = gxbase + (static_cast<std::size_t>(id) * g.h + ih) * g.w;
                if (g.stride == 1) {
                  float* dst = xrow + (w0 + kw - g.pad);
                  const float* src = grow + w0;
                  for (int i = 0; i < w1 - w0; ++i) dst[i] += wgt * src[i];
                } else {
                  for (int ow = w0; ow < w1; ++ow) xrow[ow * g.stride + kw - g.pad] += wgt * grow[ow];
                }
              }
            }
          }
    }
  });
}

void conv_backward_kernel(const ConvGeom& g, const float* grad_out, const float* x, float* grad_k) {
  parallel_for(0, static_cast<std::size_t>(g.cout), [&](std::size_t co) {
    const float* gbase = grad_out + co * g.out_plane();
    for (int ci = 0; ci < g.cin; ++ci) {
      const float* xbase = x + static_cast<std::size_t>(ci) * g.in_plane();
      float* kbase = grad_k + (co * g.cin + ci) * g.kvol();
      for (int kd = 0; kd < g.k; ++kd)
        for (int kh = 0; kh < g.k; ++kh)
          for (int kw = 0; kw < g.k; ++kw) {
            int d0, d1, h0, h1, w0, w1;
            valid_range(kd - g.pad, g.d, g.od, g.stride, d0, d1);
            valid_range(kh - g.pad, g.h, g.oh, g.stride, h0, h1);
            valid_range(kw - g.pad, g.w, g.ow, g.stride, w0, w1);
            double acc = 0.0;
            for (int od = d0; od < d1; ++od) {
              const int id = od * g.stride + kd - g.pad;
              for (int oh = h0; oh < h1; ++oh) {
                const int ih = oh * g.stride + kh - g.pad;
                const float* grow = gbase + (static_cast<std::size_t>(od) * g.oh + oh) * g.ow;
                const float* irow = xbase + (static_cast<std::size_t>(id) * g.h + ih) * g.w;
                if (g.stride == 1) {
                  acc += dot8(grow + w0, irow + (w0 + kw - g.pad), w1 - w0);
                } else {
                  float row = 0.0f;
                  for (int ow = w0; ow < w1; ++ow) row += grow[ow] * irow[ow * g.stride + kw - g.pad];
                  acc += row;
                }
              }
            }
            kbase[(kd * g.k + kh) * g.k + kw] += static_cast<float>(acc);
          }
    }
  });
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& kernel, int stride, int padding) {
  detail::require_rank(x, 4, "conv3d input");
  detail::require_rank(kernel, 5, "conv3d kernel");
  const int k = kernel.dim(2);
  if (kernel.dim(3) != k || kernel.dim(4) != k) throw ConfigError("conv3d: kernel must be cubic");
  if (k % 2 == 0) throw ConfigError("conv3d: kernel size must be odd, got " + std::to_string(k));
  if (stride < 1) throw ConfigError("conv3d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv3d: padding must be >= 0");
  if (kernel.dim(1) != x.dim(0)) {
    throw DimensionError("conv3d: kernel expects " + std::to_string(kernel.dim(1)) + " input channels, got " +
                         std::to_string(x.dim(0)));
  }
  ConvGeom g{};
  g.cin = x.dim(0);
  g.cout = kernel.dim(0);
  g.d = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.k = k;
  g.stride = stride;
  g.pad = padding;
  g.od = conv_out_dim(g.d, k, stride, padding);
  g.oh = conv_out_dim(g.h, k, stride, padding);
  g.ow = conv_out_dim(g.w, k, stride, padding);

  std::vector<float> out(static_cast<std::size_t>(g.cout) * g.out_plane(), 0.0f);
  conv_forward(g, x.data().data(), kernel.data().data(), out.data());
  return detail::make_result({g.cout, g.od, g.oh, g.ow}, std::move(out), {x, kernel}, [g](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nk = *self.inputs[1];
    if (float* gx = grad_ptr(nx)) conv_backward_input(g, self.grad.data(), nk.data.data(), gx);
    if (float* gk = grad_ptr(nk)) conv_backward_kernel(g, self.grad.data(), nx.data.data(), gk);
  });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() < 2) throw DimensionError("add_channel_bias: expected [C, spatial...]");
  if (bias.rank() != 1 || bias.dim(0) != x.dim(0)) {
    throw DimensionError("add_channel_bias: bias shape " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(x.dim(0)) + " channels");
  }
  const std::size_t s = x.numel() / static_cast<std::size_t>(x.dim(0));
  const auto xv = x.data();
  const auto bv = bias.data();
  std::vector<float> out(xv.size());
  for (std::size_t c = 0; c < bv.size(); ++c)
    for (std::size_t i = 0; i < s; ++i) out[c * s + i] = xv[c * s + i] + bv[c];
  return detail::make_result(x.shape(), std::move(out), {x, bias}, [s](Node& self) {
    if (float* gx = grad_ptr(*self.inputs[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    if (float* gb = grad_ptr(*self.inputs[1])) {
      for (std::size_t c = 0; c < self.inputs[1]->data.size(); ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < s; ++i) acc += self.grad[c * s + i];
        gb[c] += static_cast<float>(acc);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Resizing
// ---------------------------------------------------------------------------

namespace {

// Source offsets of the 2^r children of every coarse cell, r = spatial rank.
struct DyadicMap {
  Shape coarse;
  Shape fine;
  std::vector<std::size_t> fine_index;  // coarse-major: cell * children + child
  std::size_t children = 1;
};

DyadicMap dyadic_map(const Shape& fine) {
  DyadicMap m;
  m.fine = fine;
  m.coarse = fine;
  const std::size_t r = fine.size() - 1;
  for (std::size_t a = 1; a <= r; ++a) m.coarse[a] = fine[a] / 2;
  m.children = std::size_t{1} << r;
  const std::size_t ncoarse = shape_numel(m.coarse);
  m.fine_index.resize(ncoarse * m.children);
  std::vector<std::size_t> fine_stride(fine.size());
  std::size_t s = 1;
  for (std::size_t a = fine.size(); a-- > 0;) {
    fine_stride[a] = s;
    s *= static_cast<std::size_t>(fine[a]);
  }
  std::vector<int> idx(fine.size(), 0);
  for (std::size_t cell = 0; cell < ncoarse; ++cell) {
    std::size_t base = static_cast<std::size_t>(idx[0]) * fine_stride[0];
    for (std::size_t a = 1; a <= r; ++a) base += static_cast<std::size_t>(2 * idx[a]) * fine_stride[a];
    for (std::size_t child = 0; child < m.children; ++child) {
      std::size_t off = base;
      for (std::size_t a = 1; a <= r; ++a)
        if (child & (std::size_t{1} << (r - a))) off += fine_stride[a];
      m.fine_index[cell * m.children + child] = off;
    }
    for (std::size_t a = fine.size(); a-- > 0;) {
      if (++idx[a] < m.coarse[a]) break;
      idx[a] = 0;
    }
  }
  return m;
}

}  // namespace

Tensor avg_pool2(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("avg_pool2: expected [C, spatial...]");
  for (int a = 1; a < x.rank(); ++a) {
    if (x.dim(a) % 2 != 0) {
      throw DimensionError("avg_pool2: spatial dimension " + std::to_string(x.dim(a)) + " is odd in shape " +
                           shape_str(x.shape()));
    }
  }
  DyadicMap m = dyadic_map(x.shape());
  const auto xv = x.data();
  const std::size_t ncoarse = shape_numel(m.coarse);
  const float inv = 1.0f / static_cast<float>(m.children);
  std::vector<float> out(ncoarse);
  for (std::size_t c = 0; c < ncoarse; ++c) {
    float acc = 0.0f;
    for (std::size_t j = 0; j < m.children; ++j) acc += xv[m.fine_index[c * m.children + j]];
    out[c] = acc * inv;
  }
  Shape coarse = m.coarse;
  return detail::make_result(coarse, std::move(out), {x}, [m = std::move(m), inv](Node& self) {
    float* gx = grad_ptr(*self.inputs[0]);
    if (!gx) return;
    for (std::size_t c = 0; c < self.grad.size(); ++c)
      for (std::size_t j = 0; j < m.children; ++j) gx[m.fine_index[c * m.children + j]] += self.grad[c] * inv;
  });
}

Tensor upsample2(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("upsample2: expected [C, spatial...]");
  Shape fine = x.shape();
  for (std::size_t a = 1; a < fine.size(); ++a) fine[a] *= 2;
  DyadicMap m = dyadic_map(fine);
  const auto xv = x.data();
  std::vector<float> out(shape_numel(fine));
  for (std::size_t c = 0; c < xv.size(); ++c)
    for (std::size_t j = 0; j < m.children; ++j) out[m.fine_index[c * m.children + j]] = xv[c];
  return detail::make_result(fine, std::move(out), {x}, [m = std::move(m)](Node& self) {
    float* gx = grad_ptr(*self.inputs[0]);
    if (!gx) return;
    const std::size_t ncoarse = self.inputs[0]->data.size();
    for (std::size_t c = 0; c < ncoarse; ++c)
      for (std::size_t j = 0; j < m.children; ++j) gx[c] += self.grad[m.fine_index[c * m.children + j]];
  });
}

Tensor pool_resize(const Tensor& x, ResizeMode mode) {
  return mode == ResizeMode::AvgPool2 ? avg_pool2(x) : upsample2(x);
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, bool training,
                  bool update_running) {
  if (x.rank() < 2) throw DimensionError("batch_norm: expected [C, spatial...]");
  const int channels = x.dim(0);
  if (gamma.numel() != static_cast<std::size_t>(channels) || beta.numel() != static_cast<std::size_t>(channels)) {
    throw DimensionError("batch_norm: affine parameters do not match channel count");
  }
  if (stats.running_mean.size() != static_cast<std::size_t>(channels)) {
    stats.running_mean.assign(static_cast<std::size_t>(channels), 0.0f);
    stats.running_var.assign(static_cast<std::size_t>(channels), 1.0f);
  }
  const std::size_t s = x.numel() / static_cast<std::size_t>(channels);
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<float> mean_c(static_cast<std::size_t>(channels));
  std::vector<float> inv_std(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) {
    const std::size_t cc = static_cast<std::size_t>(c);
    if (training) {
      double m = 0.0;
      for (std::size_t i = 0; i < s; ++i) m += xv[cc * s + i];
      m /= static_cast<double>(s);
      double v = 0.0;
      for (std::size_t i = 0; i < s; ++i) {
        const double d = xv[cc * s + i] - m;
        v += d * d;
      }
      v /= static_cast<double>(s);
      mean_c[cc] = static_cast<float>(m);
      inv_std[cc] = static_cast<float>(1.0 / std::sqrt(v + stats.eps));
      if (update_running) {
        const double unbiased = s > 1 ? v * static_cast<double>(s) / static_cast<double>(s - 1) : v;
        stats.running_mean[cc] = (1.0f - stats.momentum) * stats.running_mean[cc] + stats.momentum * static_cast<float>(m);
        stats.running_var[cc] =
            (1.0f - stats.momentum) * stats.running_var[cc] + stats.momentum * static_cast<float>(unbiased);
      }
    } else {
      mean_c[cc] = stats.running_mean[cc];
      inv_std[cc] = 1.0f / std::sqrt(stats.running_var[cc] + stats.eps);
    }
  }
  std::vector<float> xhat(xv.size());
  std::vector<float> out(xv.size());
  for (std::size_t c = 0; c < static_cast<std::size_t>(channels); ++c)
    for (std::size_t i = 0; i < s; ++i) {
      const float h = (xv[c * s + i] - mean_c[c]) * inv_std[c];
      xhat[c * s + i] = h;
      out[c * s + i] = gv[c] * h + bv[c];
    }
  return detail::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [s, training, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node& self) {
        Node& nx = *self.inputs[0];
        Node& ng = *self.inputs[1];
        Node& nb = *self.inputs[2];
        const std::size_t channels = inv_std.size();
        const float* g = self.grad.data();
        float* gx = grad_ptr(nx);
        float* gg = grad_ptr(ng);
        float* gb = grad_ptr(nb);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0;
          double sum_gh = 0.0;
          for (std::size_t i = 0; i < s; ++i) {
            sum_g += g[c * s + i];
            sum_gh += static_cast<double>(g[c * s + i]) * xhat[c * s + i];
          }
          if (gg) gg[c] += static_cast<float>(sum_gh);
          if (gb) gb[c] += static_cast<float>(sum_g);
          if (!gx) continue;
          const float gam = ng.data[c];
          if (training) {
            const double n = static_cast<double>(s);
            const float k = gam * inv_std[c];
            const float mg = static_cast<float>(sum_g / n);
            const float mgh = static_cast<float>(sum_gh / n);
            for (std::size_t i = 0; i < s; ++i) gx[c * s + i] += k * (g[c * s + i] - mg - xhat[c * s + i] * mgh);
          } else {
            const float k = gam * inv_std[c];
            for (std::size_t i = 0; i < s; ++i) gx[c * s + i] += k * g[c * s + i];
          }
        }
      });
}

}  // namespace fass
