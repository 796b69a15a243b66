#include <algorithm>
#include <cmath>
#include <limits>

#include "fass/ops.hpp"
#include "ops_common.hpp"

namespace fass {

using detail::grad_ptr;
using detail::Node;

namespace {

// Element index of `a` feeding each output element, for pure data-movement
// ops. Backward is a scatter-add through the same map.
Tensor index_map_op(const Tensor& a, Shape out_shape, std::vector<std::size_t> source) {
  const auto av = a.data();
  std::vector<float> out(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) out[i] = av[source[i]];
  return detail::make_result(std::move(out_shape), std::move(out), {a},
                             [source = std::move(source)](Node& self) {
                               float* ga = grad_ptr(*self.inputs[0]);
                               if (!ga) return;
                               for (std::size_t i = 0; i < source.size(); ++i) ga[source[i]] += self.grad[i];
                             });
}

std::size_t spatial_size(const Tensor& a) { return a.numel() / static_cast<std::size_t>(a.dim(0)); }

}  // namespace

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<float> out(a.data().begin(), a.data().end());
  return detail::make_result(shape, std::move(out), {a}, [](Node& self) {
    float* ga = grad_ptr(*self.inputs[0]);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor expand(const Tensor& a, const Shape& shape) {
  if (shape.size() != a.shape().size()) {
    throw DimensionError("expand: rank mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  const std::size_t r = shape.size();
  for (std::size_t i = 0; i < r; ++i) {
    if (a.shape()[i] != shape[i] && a.shape()[i] != 1) {
      throw DimensionError("expand: cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
  }
  std::vector<std::size_t> src_stride(r);
  std::size_t s = 1;
  for (std::size_t i = r; i-- > 0;) {
    src_stride[i] = a.shape()[i] == 1 ? 0 : s;
    s *= static_cast<std::size_t>(a.shape()[i]);
  }
  const std::size_t n = shape_numel(shape);
  std::vector<std::size_t> source(n);
  std::vector<int> idx(r, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += static_cast<std::size_t>(idx[i]) * src_stride[i];
    source[flat] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  return index_map_op(a, shape, std::move(source));
}

Tensor concat0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat0: no inputs");
  Shape out_shape = parts[0].shape();
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != static_cast<int>(out_shape.size()) ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), out_shape.begin() + 1)) {
      throw DimensionError("concat0: trailing shapes differ: " + shape_str(p.shape()) + " vs " +
                           shape_str(out_shape));
    }
    total += p.dim(0);
  }
  out_shape[0] = total;
  std::vector<float> out;
  out.reserve(shape_numel(out_shape));
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return detail::make_result(out_shape, std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (auto& in : self.inputs) {
      const std::size_t n = in->data.size();
      if (float* g = grad_ptr(*in)) {
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

Tensor narrow0(const Tensor& a, int start, int length) {
  if (start < 0 || length <= 0 || start + length > a.dim(0)) {
    throw DimensionError("narrow0: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside axis of size " + std::to_string(a.dim(0)));
  }
  Shape out_shape = a.shape();
  out_shape[0] = length;
  const std::size_t inner = spatial_size(a);
  const std::size_t base = static_cast<std::size_t>(start) * inner;
  std::vector<float> out(a.data().begin() + static_cast<std::ptrdiff_t>(base),
                         a.data().begin() + static_cast<std::ptrdiff_t>(base + length * inner));
  return detail::make_result(out_shape, std::move(out), {a}, [base](Node& self) {
    float* ga = grad_ptr(*self.inputs[0]);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[base + i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  const int rows = a.dim(0);
  const int cols = a.dim(1);
  std::vector<std::size_t> source(a.numel());
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) source[static_cast<std::size_t>(c) * rows + r] = static_cast<std::size_t>(r) * cols + c;
  return index_map_op(a, {cols, rows}, std::move(source));
}

Tensor gather(const Tensor& a, const std::vector<std::size_t>& flat_indices) {
  if (flat_indices.empty()) throw DimensionError("gather: empty index list");
  for (std::size_t i : flat_indices) {
    if (i >= a.numel()) throw DimensionError("gather: index out of range");
  }
  return index_map_op(a, {static_cast<int>(flat_indices.size())}, flat_indices);
}

Tensor pad_symmetric_last2(const Tensor& a, int pad_rows, int pad_cols) {
  if (a.rank() < 2) throw DimensionError("pad_symmetric_last2: rank must be >= 2");
  const int rows = a.dim(-2);
  const int cols = a.dim(-1);
  if (pad_rows < 0 || pad_cols < 0 || pad_rows > rows || pad_cols > cols) {
    throw DimensionError("pad_symmetric_last2: padding exceeds the axis length");
  }
  Shape out_shape = a.shape();
  out_shape[out_shape.size() - 2] = rows + pad_rows;
  out_shape[out_shape.size() - 1] = cols + pad_cols;
  const std::size_t planes = a.numel() / (static_cast<std::size_t>(rows) * cols);
  const int out_rows = rows + pad_rows;
  const int out_cols = cols + pad_cols;
  auto reflect = [](int i, int n) { return i < n ? i : 2 * n - 1 - i; };
  std::vector<std::size_t> source(shape_numel(out_shape));
  std::size_t k = 0;
  for (std::size_t p = 0; p < planes; ++p)
    for (int r = 0; r < out_rows; ++r)
      for (int c = 0; c < out_cols; ++c)
        source[k++] = p * rows * cols + static_cast<std::size_t>(reflect(r, rows)) * cols + reflect(c, cols);
  return index_map_op(a, out_shape, std::move(source));
}

Tensor crop_last2(const Tensor& a, int rows, int cols) {
  if (a.rank() < 2) throw DimensionError("crop_last2: rank must be >= 2");
  const int in_rows = a.dim(-2);
  const int in_cols = a.dim(-1);
  if (rows <= 0 || cols <= 0 || rows > in_rows || cols > in_cols) {
    throw DimensionError("crop_last2: crop larger than input");
  }
  Shape out_shape = a.shape();
  out_shape[out_shape.size() - 2] = rows;
  out_shape[out_shape.size() - 1] = cols;
  const std::size_t planes = a.numel() / (static_cast<std::size_t>(in_rows) * in_cols);
  std::vector<std::size_t> source(shape_numel(out_shape));
  std::size_t k = 0;
  for (std::size_t p = 0; p < planes; ++p)
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) source[k++] = p * in_rows * in_cols + static_cast<std::size_t>(r) * in_cols + c;
  return index_map_op(a, out_shape, std::move(source));
}

// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return detail::make_result({1}, {static_cast<float>(acc)}, {a}, [](Node& self) {
    float* ga = grad_ptr(*self.inputs[0]);
    if (!ga) return;
    const float g = self.grad[0];
    const std::size_t n = self.inputs[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += g;
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0f / static_cast<float>(a.numel())); }

Tensor mean_spatial(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("mean_spatial: expected [C, spatial...]");
  const int channels = a.dim(0);
  const std::size_t s = spatial_size(a);
  const auto av = a.data();
  std::vector<float> out(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s; ++i) acc += av[c * s + i];
    out[static_cast<std::size_t>(c)] = static_cast<float>(acc / static_cast<double>(s));
  }
  return detail::make_result({channels}, std::move(out), {a}, [s](Node& self) {
    float* ga = grad_ptr(*self.inputs[0]);
    if (!ga) return;
    const float inv = 1.0f / static_cast<float>(s);
    for (std::size_t c = 0; c < self.grad.size(); ++c)
      for (std::size_t i = 0; i < s; ++i) ga[c * s + i] += self.grad[c] * inv;
  });
}

Tensor max_spatial(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("max_spatial: expected [C, spatial...]");
  const int channels = a.dim(0);
  const std::size_t s = spatial_size(a);
  const auto av = a.data();
  std::vector<float> out(static_cast<std::size_t>(channels));
  std::vector<std::size_t> argmax(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) {
    std::size_t best = c * s;
    for (std::size_t i = 1; i < s; ++i)
      if (av[c * s + i] > av[best]) best = c * s + i;
    out[static_cast<std::size_t>(c)] = av[best];
    argmax[static_cast<std::size_t>(c)] = best;
  }
  return detail::make_result({channels}, std::move(out), {a}, [argmax = std::move(argmax)](Node& self) {
    float* ga = grad_ptr(*self.inputs[0]);
    if (!ga) return;
    for (std::size_t c = 0; c < argmax.size(); ++c) ga[argmax[c]] += self.grad[c];
  });
}

Tensor mean_channels(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("mean_channels: expected [C, spatial...]");
  const int channels = a.dim(0);
  const std::size_t s = spatial_size(a);
  const auto av = a.data();
  std::vector<float> out(s, 0.0f);
  for (int c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < s; ++i) out[i] += av[c * s + i];
  for (float& v : out) v /= static_cast<float>(channels);
  Shape out_shape = a.shape();
  out_shape[0] = 1;
  return detail::make_result(out_shape, std::move(out), {a}, [channels, s](Node& self) {
    float* ga = grad_ptr(*self.inputs[0]);
    if (!ga) return;
    const float inv = 1.0f / static_cast<float>(channels);
    for (int c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < s; ++i) ga[c * s + i] += self.grad[i] * inv;
  });
}

Tensor max_channels(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("max_channels: expected [C, spatial...]");
  const int channels = a.dim(0);
  const std::size_t s = spatial_size(a);
  const auto av = a.data();
  std::vector<float> out(av.begin(), av.begin() + static_cast<std::ptrdiff_t>(s));
  std::vector<std::size_t> argmax(s);
  for (std::size_t i = 0; i < s; ++i) argmax[i] = i;
  for (int c = 1; c < channels; ++c)
    for (std::size_t i = 0; i < s; ++i)
      if (av[c * s + i] > out[i]) {
        out[i] = av[c * s + i];
        argmax[i] = c * s + i;
      }
  Shape out_shape = a.shape();
  out_shape[0] = 1;
  return detail::make_result(out_shape, std::move(out), {a}, [argmax = std::move(argmax)](Node& self) {
    float* ga = grad_ptr(*self.inputs[0]);
    if (!ga) return;
    for (std::size_t i = 0; i < argmax.size(); ++i) ga[argmax[i]] += self.grad[i];
  });
}

namespace {

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Tensor& a, int axis) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("softmax: axis out of range for " + shape_str(a.shape()));
  AxisSplit s{1, static_cast<std::size_t>(a.dim(axis)), 1};
  for (int i = 0; i < axis; ++i) s.outer *= static_cast<std::size_t>(a.dim(i));
  for (int i = axis + 1; i < r; ++i) s.inner *= static_cast<std::size_t>(a.dim(i));
  return s;
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  const AxisSplit s = split_axis(a, axis);
  const auto av = a.data();
  std::vector<float> out(av.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t k = 0; k < s.len; ++k) mx = std::max(mx, av[base + k * s.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < s.len; ++k) {
        const float e = std::exp(av[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        total += e;
      }
      const float inv = static_cast<float>(1.0 / total);
      for (std::size_t k = 0; k < s.len; ++k) out[base + k * s.inner] *= inv;
    }
  return detail::make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    float* ga = grad_ptr(*self.inputs[0]);
    if (!ga) return;
    const float* y = self.data.data();
    const float* g = self.grad.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.len; ++k) dot += static_cast<double>(g[base + k * s.inner]) * y[base + k * s.inner];
        for (std::size_t k = 0; k < s.len; ++k) {
          const std::size_t i = base + k * s.inner;
          ga[i] += y[i] * (g[i] - static_cast<float>(dot));
        }
      }
  });
}

Tensor log_softmax(const Tensor& a, int axis) {
  const AxisSplit s = split_axis(a, axis);
  const auto av = a.data();
  std::vector<float> out(av.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t k = 0; k < s.len; ++k) mx = std::max(mx, av[base + k * s.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < s.len; ++k) total += std::exp(static_cast<double>(av[base + k * s.inner] - mx));
      const float lse = mx + static_cast<float>(std::log(total));
      for (std::size_t k = 0; k < s.len; ++k) out[base + k * s.inner] = av[base + k * s.inner] - lse;
    }
  return detail::make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    float* ga = grad_ptr(*self.inputs[0]);
    if (!ga) return;
    const float* y = self.data.data();
    const float* g = self.grad.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double gsum = 0.0;
        for (std::size_t k = 0; k < s.len; ++k) gsum += g[base + k * s.inner];
        for (std::size_t k = 0; k < s.len; ++k) {
          const std::size_t i = base + k * s.inner;
          ga[i] += g[i] - std::exp(y[i]) * static_cast<float>(gsum);
        }
      }
  });
}

}  // namespace fass
