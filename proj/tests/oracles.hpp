#pragma once
// Reference implementations used only by tests. Each one follows the most
// direct formulation available and shares no code with the library path it
// checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <tuple>
#include <vector>

#include "fass/edge.hpp"
#include "fass/tensor.hpp"
#include "fass/volume.hpp"

namespace oracle {

inline fass::Tensor random_tensor(const fass::Shape& shape, std::mt19937_64& rng, float lo = -1.0f,
                                  float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(fass::shape_numel(shape));
  for (float& x : v) x = u(rng);
  return fass::Tensor::from(shape, std::move(v));
}

// Textbook 1D two-channel analysis: periodic extension, convolution with the
// analysis filter, keep every second sample.
inline std::vector<double> filter_bank_1d(const std::vector<double>& x, const std::vector<double>& f) {
  const int n = static_cast<int>(x.size());
  const int len = static_cast<int>(f.size());
  std::vector<double> conv(static_cast<std::size_t>(n));
  for (int m = 0; m < n; ++m) {
    double s = 0.0;
    for (int j = 0; j < len; ++j) s += f[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(((m - j) % n + n) % n)];
    conv[static_cast<std::size_t>(m)] = s;
  }
  std::vector<double> out;
  for (int k = 0; k < n / 2; ++k) out.push_back(conv[static_cast<std::size_t>((2 * k + len / 2) % n)]);
  return out;
}

// Central finite differences of a scalar function of several tensors.
// Returns the norm-wise relative error ||analytic - numeric|| / max(norms)
// over all inputs that require grad.
inline double gradient_relative_error(const std::function<fass::Tensor(const std::vector<fass::Tensor>&)>& fn,
                                      std::vector<fass::Tensor> inputs, float step = 1e-3f) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  fass::Tensor loss = fn(inputs);
  fass::backward(loss);

  double diff2 = 0.0, an2 = 0.0, nu2 = 0.0;
  for (auto& t : inputs) {
    std::vector<float> analytic(t.grad().begin(), t.grad().end());
    if (analytic.empty()) analytic.assign(t.numel(), 0.0f);
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const float orig = data[i];
      double plus, minus;
      {
        fass::NoGradGuard ng;
        data[i] = orig + step;
        plus = fn(inputs).item();
        data[i] = orig - step;
        minus = fn(inputs).item();
        data[i] = orig;
      }
      const double numeric = (plus - minus) / (2.0 * step);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      an2 += static_cast<double>(analytic[i]) * analytic[i];
      nu2 += numeric * numeric;
    }
  }
  const double denom = std::max({std::sqrt(an2), std::sqrt(nu2), 1e-8});
  return std::sqrt(diff2) / denom;
}

inline std::vector<double> matmul(const std::vector<float>& a, const std::vector<float>& b, int m, int k, int n) {
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) out[i * n + j] += static_cast<double>(a[i * k + p]) * b[p * n + j];
  return out;
}

// Seven nested loops (co, od, oh, ow, ci, kd, kh, kw), zero padding.
inline std::vector<double> conv3d(const std::vector<float>& x, const std::vector<float>& w, int cin, int d, int h,
                                  int wd, int cout, int k, int stride, int pad) {
  const int od = (d + 2 * pad - k) / stride + 1;
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(cout) * od * oh * ow, 0.0);
  for (int co = 0; co < cout; ++co)
    for (int z = 0; z < od; ++z)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          double acc = 0.0;
          for (int ci = 0; ci < cin; ++ci)
            for (int a = 0; a < k; ++a)
              for (int b = 0; b < k; ++b)
                for (int c = 0; c < k; ++c) {
                  const int iz = z * stride + a - pad;
                  const int iy = y * stride + b - pad;
                  const int ix = xx * stride + c - pad;
                  if (iz < 0 || iy < 0 || ix < 0 || iz >= d || iy >= h || ix >= wd) continue;
                  acc += static_cast<double>(w[((((co * cin) + ci) * k + a) * k + b) * k + c]) *
                         x[((ci * d + iz) * h + iy) * wd + ix];
                }
          out[((co * od + z) * oh + y) * ow + xx] = acc;
        }
  return out;
}

// Foreground voxels of `fg` inside the box, one voxel at a time.
inline std::size_t box_count(const fass::Mask& fg, const fass::Coord3& o, const fass::Dims3& s) {
  std::size_t n = 0;
  for (int z = o[0]; z < o[0] + s[0]; ++z)
    for (int y = o[1]; y < o[1] + s[1]; ++y)
      for (int x = o[2]; x < o[2] + s[2]; ++x) n += fg.at(z, y, x) ? 1 : 0;
  return n;
}

// Every box origin whose overlap fraction with `fg` is below alpha.
inline std::vector<fass::Coord3> feasible_origins(const fass::Mask& fg, const fass::Dims3& box, double alpha) {
  std::vector<fass::Coord3> out;
  const double volume = static_cast<double>(fass::dims_volume(box));
  for (int z = 0; z + box[0] <= fg.dims[0]; ++z)
    for (int y = 0; y + box[1] <= fg.dims[1]; ++y)
      for (int x = 0; x + box[2] <= fg.dims[2]; ++x)
        if (static_cast<double>(box_count(fg, {z, y, x}, box)) / volume < alpha) out.push_back({z, y, x});
  return out;
}

// O(n^2) NMS: sort every other point by (squared distance, position, index).
inline std::vector<fass::BoundaryPoint> nms_brute(const std::vector<fass::BoundaryPoint>& pts, int k) {
  std::vector<fass::BoundaryPoint> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<std::tuple<long, fass::Coord3, std::size_t>> others;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j == i) continue;
      long d = 0;
      for (int a = 0; a < 3; ++a) d += static_cast<long>(pts[i].pos[a] - pts[j].pos[a]) * (pts[i].pos[a] - pts[j].pos[a]);
      others.emplace_back(d, pts[j].pos, j);
    }
    std::sort(others.begin(), others.end());
    bool keep = true;
    for (std::size_t n = 0; n < others.size() && n < static_cast<std::size_t>(k); ++n)
      keep = keep && pts[i].score > pts[std::get<2>(others[n])].score;
    if (keep) out.push_back(pts[i]);
  }
  return out;
}

}  // namespace oracle
