#pragma once
// All-pairs reference for overlap and surface-distance metrics.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "fass/volume.hpp"

namespace metric_oracle {

struct Case {
  fass::Mask pred, truth;
  std::array<double, 3> spacing{};
};

struct Result {
  double dice = 0, jaccard = 0, hd95 = 0, asd = 0;
};

// Random blobby masks up to 12^3 with anisotropic spacing; both non-empty.
inline Case random_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> ext(3, 12);
  std::uniform_real_distribution<double> sp(0.5, 2.5), density(0.1, 0.7);
  const fass::Dims3 d{ext(rng), ext(rng), ext(rng)};
  Case c{fass::Mask(d), fass::Mask(d), {sp(rng), sp(rng), sp(rng)}};
  std::bernoulli_distribution p_on(density(rng)), t_on(density(rng));
  for (auto& v : c.pred.values) v = p_on(rng);
  for (auto& v : c.truth.values) v = t_on(rng);
  c.pred.values[0] = 1;
  c.truth.values.back() = 1;
  return c;
}

inline std::vector<fass::Coord3> surface(const fass::Mask& m) {
  std::vector<fass::Coord3> out;
  const auto& d = m.dims;
  auto on = [&](int z, int y, int x) { return fass::in_bounds(d, z, y, x) && m.at(z, y, x); };
  for (int z = 0; z < d[0]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[2]; ++x)
        if (m.at(z, y, x) && !(on(z - 1, y, x) && on(z + 1, y, x) && on(z, y - 1, x) && on(z, y + 1, x) &&
                               on(z, y, x - 1) && on(z, y, x + 1)))
          out.push_back({z, y, x});
  return out;
}

inline Result evaluate(const fass::Mask& p, const fass::Mask& t, const std::array<double, 3>& sp) {
  double inter = 0, np = 0, nt = 0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    inter += p.values[i] && t.values[i];
    np += p.values[i];
    nt += t.values[i];
  }
  Result r;
  r.dice = 200.0 * inter / (np + nt);
  r.jaccard = 100.0 * inter / (np + nt - inter);
  const auto sp_p = surface(p), sp_t = surface(t);
  std::vector<double> all;
  auto nearest = [&](const fass::Coord3& a, const std::vector<fass::Coord3>& set) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : set)
      best = std::min(best, std::sqrt(std::pow((a[0] - b[0]) * sp[0], 2) + std::pow((a[1] - b[1]) * sp[1], 2) +
                                      std::pow((a[2] - b[2]) * sp[2], 2)));
    return best;
  };
  for (const auto& a : sp_p) all.push_back(nearest(a, sp_t));
  for (const auto& b : sp_t) all.push_back(nearest(b, sp_p));
  double total = 0;
  for (double v : all) total += v;
  r.asd = total / static_cast<double>(all.size());
  std::sort(all.begin(), all.end());
  const double h = 0.95 * static_cast<double>(all.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  const std::size_t hi = std::min(lo + 1, all.size() - 1);
  r.hd95 = all[lo] * (1.0 - (h - static_cast<double>(lo))) + all[hi] * (h - static_cast<double>(lo));
  return r;
}

}  // namespace metric_oracle
