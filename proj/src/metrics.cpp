#include "fass/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fass/edge.hpp"
#include "fass/errors.hpp"

namespace fass {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas s^2 (q - p)^2 + f(p) over one line.
void squared_distance_1d(const double* f, double* d, int n, double s2, std::vector<int>& v, std::vector<double>& z) {
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    while (k >= 0) {
      const int p = v[static_cast<std::size_t>(k)];
      const double cross = ((f[q] + s2 * q * q) - (f[p] + s2 * p * p)) / (2.0 * s2 * (q - p));
      if (cross <= z[static_cast<std::size_t>(k)]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] =
        k == 0 ? -kInf
               : ((f[q] + s2 * q * q) - (f[v[static_cast<std::size_t>(k - 1)]] +
                                         s2 * v[static_cast<std::size_t>(k - 1)] * v[static_cast<std::size_t>(k - 1)])) /
                     (2.0 * s2 * (q - v[static_cast<std::size_t>(k - 1)]));
  }
  if (k < 0) {
    std::fill(d, d + n, kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (j < k && z[static_cast<std::size_t>(j + 1)] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    d[q] = s2 * (q - p) * (q - p) + f[p];
  }
}

double percentile(std::vector<double> values, double fraction) {
  std::sort(values.begin(), values.end());
  const double pos = fraction * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace

std::vector<double> distance_transform(const Mask& set, const std::array<double, 3>& spacing_mm) {
  const Dims3& d = set.dims;
  std::vector<double> g(set.values.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = set.values[i] ? 0.0 : kInf;
  const int longest = std::max({d[0], d[1], d[2]});
  std::vector<double> line(static_cast<std::size_t>(longest)), out(static_cast<std::size_t>(longest));
  std::vector<int> v(static_cast<std::size_t>(longest));
  std::vector<double> z(static_cast<std::size_t>(longest) + 1);
  const std::array<std::size_t, 3> stride{static_cast<std::size_t>(d[1]) * d[2], static_cast<std::size_t>(d[2]), 1};
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    const double s2 = spacing_mm[static_cast<std::size_t>(axis)] * spacing_mm[static_cast<std::size_t>(axis)];
    for (int i = 0; i < d[a1]; ++i)
      for (int j = 0; j < d[a2]; ++j) {
        const std::size_t base = i * stride[static_cast<std::size_t>(a1)] + j * stride[static_cast<std::size_t>(a2)];
        const std::size_t step = stride[static_cast<std::size_t>(axis)];
        for (int q = 0; q < d[axis]; ++q) line[static_cast<std::size_t>(q)] = g[base + q * step];
        squared_distance_1d(line.data(), out.data(), d[axis], s2, v, z);
        for (int q = 0; q < d[axis]; ++q) g[base + q * step] = out[static_cast<std::size_t>(q)];
      }
  }
  for (double& x : g) x = std::sqrt(x);
  return g;
}

PairMetrics evaluate_pair(const Mask& pred, const Mask& truth, const std::array<double, 3>& spacing_mm) {
  if (pred.dims != truth.dims) throw DimensionError("evaluate_pair: mask shapes differ");
  for (double s : spacing_mm)
    if (!(s > 0.0)) throw ConfigError("evaluate_pair: spacing must be positive");
  const std::size_t p = pred.count(), t = truth.count();
  PairMetrics m;
  if (p == 0 || t == 0) {
    m.degenerate = true;
    if (p == 0 && t == 0) {
      m.dice = m.jaccard = 100.0;
      return m;
    }
    double diag = 0.0;
    for (int a = 0; a < 3; ++a) diag += std::pow(pred.dims[a] * spacing_mm[static_cast<std::size_t>(a)], 2);
    m.hd95_mm = m.asd_mm = std::sqrt(diag);
    return m;
  }
  std::size_t inter = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) inter += (pred.values[i] && truth.values[i]) ? 1 : 0;
  m.dice = 200.0 * static_cast<double>(inter) / static_cast<double>(p + t);
  m.jaccard = 100.0 * static_cast<double>(inter) / static_cast<double>(p + t - inter);

  const auto surface_p = extract_boundary(pred), surface_t = extract_boundary(truth);
  const std::vector<double> to_t = distance_transform(build_truth_map(surface_t, truth.dims, 0), spacing_mm);
  const std::vector<double> to_p = distance_transform(build_truth_map(surface_p, pred.dims, 0), spacing_mm);
  std::vector<double> pooled;
  pooled.reserve(surface_p.size() + surface_t.size());
  for (const Coord3& c : surface_p) pooled.push_back(to_t[flat_index(pred.dims, c[0], c[1], c[2])]);
  for (const Coord3& c : surface_t) pooled.push_back(to_p[flat_index(pred.dims, c[0], c[1], c[2])]);
  m.asd_mm = std::accumulate(pooled.begin(), pooled.end(), 0.0) / static_cast<double>(pooled.size());
  m.hd95_mm = percentile(std::move(pooled), 0.95);
  return m;
}

MetricsReport evaluate_metrics(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& truth,
                               const Dims3& dims, const std::array<double, 3>& spacing_mm, int num_classes) {
  if (pred.size() != dims_volume(dims) || truth.size() != dims_volume(dims)) {
    throw DimensionError("evaluate_metrics: label maps do not match the volume dims");
  }
  MetricsReport report;
  report.spacing_mm = spacing_mm;
  for (int c = 1; c < num_classes; ++c) {
    Mask p(dims), t(dims);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      p.values[i] = pred[i] == c;
      t.values[i] = truth[i] == c;
    }
    report.per_class.push_back(evaluate_pair(p, t, spacing_mm));
  }
  return report;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

}  // namespace fass
