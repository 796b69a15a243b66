#include "fass/edge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "fass/errors.hpp"
#include "fass/ops.hpp"

namespace fass {

namespace {

long dist2(const Coord3& a, const Coord3& b) {
  long s = 0;
  for (int i = 0; i < 3; ++i) {
    const long d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<Coord3> ball_offsets(int r) {
  std::vector<Coord3> out;
  for (int z = -r; z <= r; ++z)
    for (int y = -r; y <= r; ++y)
      for (int x = -r; x <= r; ++x)
        if (z * z + y * y + x * x <= r * r) out.push_back({z, y, x});
  return out;
}

double ratio_with_offsets(const Coord3& b, const Mask& fore, const std::vector<Coord3>& offsets) {
  std::size_t inside = 0, hits = 0;
  for (const Coord3& o : offsets) {
    const int z = b[0] + o[0], y = b[1] + o[1], x = b[2] + o[2];
    if (!in_bounds(fore.dims, z, y, x)) continue;
    ++inside;
    hits += fore.at(z, y, x) ? 1 : 0;
  }
  return inside == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(inside);
}

// Uniform grid over integer points for exact k-nearest-neighbour queries.
class PointGrid {
 public:
  explicit PointGrid(const std::vector<BoundaryPoint>& points) : points_(points) {
    lo_ = hi_ = points.front().pos;
    for (const auto& p : points)
      for (int a = 0; a < 3; ++a) {
        lo_[a] = std::min(lo_[a], p.pos[a]);
        hi_[a] = std::max(hi_[a], p.pos[a]);
      }
    double extent = 1.0;
    for (int a = 0; a < 3; ++a) extent *= hi_[a] - lo_[a] + 1;
    cell_ = std::max(1, static_cast<int>(std::ceil(std::cbrt(extent * 4.0 / static_cast<double>(points.size())))));
    for (int a = 0; a < 3; ++a) cells_[a] = (hi_[a] - lo_[a]) / cell_ + 1;
    buckets_.resize(static_cast<std::size_t>(cells_[0]) * cells_[1] * cells_[2]);
    for (std::size_t i = 0; i < points.size(); ++i) buckets_[bucket(cell_of(points[i].pos))].push_back(i);
  }

  // Indices of the k nearest other points ordered by (distance, position, index).
  std::vector<std::size_t> nearest(std::size_t query, int k) const {
    using Key = std::tuple<long, Coord3, std::size_t>;
    const Coord3& q = points_[query].pos;
    const Coord3 c = cell_of(q);
    const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(k), points_.size() - 1);
    std::vector<Key> found;
    const int max_ring = std::max({cells_[0], cells_[1], cells_[2]});
    for (int ring = 0; ring <= max_ring; ++ring) {
      visit_ring(c, ring, [&](std::size_t i) {
        if (i != query) found.emplace_back(dist2(q, points_[i].pos), points_[i].pos, i);
      });
      if (found.size() >= want) {
        std::nth_element(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(want - 1), found.end());
        const long bound = static_cast<long>(ring) * cell_ + 1;
        if (want == 0 || std::get<0>(found[want - 1]) < bound * bound) break;
      }
    }
    std::sort(found.begin(), found.end());
    found.resize(want);
    std::vector<std::size_t> out;
    for (const Key& key : found) out.push_back(std::get<2>(key));
    return out;
  }

 private:
  Coord3 cell_of(const Coord3& p) const {
    return {(p[0] - lo_[0]) / cell_, (p[1] - lo_[1]) / cell_, (p[2] - lo_[2]) / cell_};
  }
  std::size_t bucket(const Coord3& c) const {
    return (static_cast<std::size_t>(c[0]) * cells_[1] + c[1]) * cells_[2] + c[2];
  }

  template <class Fn>
  void visit_ring(const Coord3& c, int ring, Fn&& fn) const {
    for (int z = c[0] - ring; z <= c[0] + ring; ++z) {
      if (z < 0 || z >= cells_[0]) continue;
      for (int y = c[1] - ring; y <= c[1] + ring; ++y) {
        if (y < 0 || y >= cells_[1]) continue;
        const bool face = std::abs(z - c[0]) == ring || std::abs(y - c[1]) == ring;
        for (int x = c[2] - ring; x <= c[2] + ring; x += (face || ring == 0) ? 1 : 2 * ring) {
          if (x < 0 || x >= cells_[2]) continue;
          for (std::size_t i : buckets_[bucket({z, y, x})]) fn(i);
        }
      }
    }
  }

  const std::vector<BoundaryPoint>& points_;
  Coord3 lo_{}, hi_{};
  Coord3 cells_{};
  int cell_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
};

LossTerm skipped_term() { return LossTerm{Tensor::scalar(0.0f), true}; }

void check_probability_map(const Tensor& m_pred, const char* who) {
  if (m_pred.rank() != 4 || m_pred.dim(0) != 1) {
    throw DimensionError(std::string(who) + ": expected [1, D, H, W], got " + shape_str(m_pred.shape()));
  }
}

Dims3 map_dims(const Tensor& m_pred) { return {m_pred.dim(1), m_pred.dim(2), m_pred.dim(3)}; }

}  // namespace

void ECConfig::validate() const {
  if (radius < 1) throw ConfigError("ec: radius must be >= 1");
  if (k < 1) throw ConfigError("ec: k must be >= 1");
  if (truth_radius < 0) throw ConfigError("ec: truth radius must be >= 0");
  if (!(epsilon > 0.0)) throw ConfigError("ec: epsilon must be positive");
  if (!(image_quantile >= 0.0 && image_quantile <= 1.0)) throw ConfigError("ec: image quantile must lie in [0, 1]");
  if (max_candidates < 2) throw ConfigError("ec: max_candidates must be >= 2");
}

std::vector<Coord3> extract_boundary(const Mask& mask) {
  static constexpr int kSteps[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  std::vector<Coord3> out;
  for (int z = 0; z < mask.dims[0]; ++z)
    for (int y = 0; y < mask.dims[1]; ++y)
      for (int x = 0; x < mask.dims[2]; ++x) {
        if (!mask.at(z, y, x)) continue;
        for (const auto& s : kSteps) {
          const int nz = z + s[0], ny = y + s[1], nx = x + s[2];
          if (!in_bounds(mask.dims, nz, ny, nx) || !mask.at(nz, ny, nx)) {
            out.push_back({z, y, x});
            break;
          }
        }
      }
  return out;
}

std::vector<Coord3> image_edges(const Volume& v, double quantile) {
  const Dims3& d = v.dims;
  std::vector<float> magnitude(v.size());
  auto sample = [&](int z, int y, int x) {
    return v.intensity(std::clamp(z, 0, d[0] - 1), std::clamp(y, 0, d[1] - 1), std::clamp(x, 0, d[2] - 1));
  };
  for (int z = 0; z < d[0]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[2]; ++x) {
        const float gz = 0.5f * (sample(z + 1, y, x) - sample(z - 1, y, x));
        const float gy = 0.5f * (sample(z, y + 1, x) - sample(z, y - 1, x));
        const float gx = 0.5f * (sample(z, y, x + 1) - sample(z, y, x - 1));
        magnitude[flat_index(d, z, y, x)] = std::sqrt(gz * gz + gy * gy + gx * gx);
      }
  std::vector<float> sorted = magnitude;
  const auto rank = static_cast<std::size_t>(std::floor(quantile * static_cast<double>(sorted.size() - 1)));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank), sorted.end());
  const float threshold = sorted[rank];
  std::vector<Coord3> out;
  for (int z = 0; z < d[0]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[2]; ++x)
        if (magnitude[flat_index(d, z, y, x)] >= threshold) out.push_back({z, y, x});
  return out;
}

double foreground_ratio(const Coord3& b, const Mask& fore, int r) {
  if (!in_bounds(fore.dims, b[0], b[1], b[2])) throw DimensionError("foreground_ratio: point outside the volume");
  return ratio_with_offsets(b, fore, ball_offsets(r));
}

double irregularity_score(double p) { return std::abs(p - 0.5); }

std::vector<BoundaryPoint> score_points(const std::vector<Coord3>& points, const Mask& fore, int r) {
  const std::vector<Coord3> offsets = ball_offsets(r);
  std::vector<BoundaryPoint> out;
  out.reserve(points.size());
  for (const Coord3& p : points) {
    const double ratio = ratio_with_offsets(p, fore, offsets);
    out.push_back({p, ratio, irregularity_score(ratio)});
  }
  return out;
}

std::vector<BoundaryPoint> nms_filter(const std::vector<BoundaryPoint>& points, int k) {
  if (k < 1) throw ConfigError("nms_filter: k must be >= 1");
  if (points.empty()) return {};
  const PointGrid grid(points);
  std::vector<BoundaryPoint> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto neighbours = grid.nearest(i, k);
    const bool keep = std::all_of(neighbours.begin(), neighbours.end(),
                                  [&](std::size_t j) { return points[i].score > points[j].score; });
    if (keep) out.push_back(points[i]);
  }
  return out;
}

Mask build_truth_map(const std::vector<Coord3>& points, const Dims3& dims, int r) {
  if (r < 0) throw ConfigError("build_truth_map: radius must be >= 0");
  Mask m(dims);
  const std::vector<Coord3> offsets = ball_offsets(r);
  for (const Coord3& p : points)
    for (const Coord3& o : offsets) {
      const int z = p[0] + o[0], y = p[1] + o[1], x = p[2] + o[2];
      if (in_bounds(dims, z, y, x)) m.set(z, y, x);
    }
  return m;
}

GroundTruthKeypoints ground_truth_keypoints(const Volume& patch, int num_classes, const ECConfig& cfg) {
  cfg.validate();
  GroundTruthKeypoints gt;
  auto region = [&](int cls) {
    Mask m(patch.dims);
    for (std::size_t i = 0; i < patch.size(); ++i) m.values[i] = patch.labels[i] >= cls ? 1 : 0;
    return m;
  };
  if (cfg.source == EdgeSource::Image) {
    const Mask fore = region(1);
    gt.retained = nms_filter(score_points(image_edges(patch, cfg.image_quantile), fore, cfg.radius), cfg.k);
  } else {
    for (int cls = 1; cls < num_classes; ++cls) {
      const Mask fore = region(cls);
      const auto kept = nms_filter(score_points(extract_boundary(fore), fore, cfg.radius), cfg.k);
      gt.retained.insert(gt.retained.end(), kept.begin(), kept.end());
    }
  }
  std::vector<Coord3> positions;
  for (const auto& p : gt.retained) positions.push_back(p.pos);
  gt.truth = build_truth_map(positions, patch.dims, cfg.truth_radius);
  return gt;
}

LossTerm match_loss(const Tensor& m_pred, const Mask& truth) {
  check_probability_map(m_pred, "match_loss");
  if (map_dims(m_pred) != truth.dims) throw DimensionError("match_loss: map and truth shapes differ");
  const std::size_t n = truth.values.size();
  const std::size_t pos = truth.count();
  if (pos == 0) return skipped_term();
  const float w = static_cast<float>(n - pos) / static_cast<float>(pos);
  std::vector<float> wy(n), ny(n);
  for (std::size_t i = 0; i < n; ++i) {
    wy[i] = truth.values[i] ? w : 0.0f;
    ny[i] = truth.values[i] ? 0.0f : 1.0f;
  }
  const Tensor p = clamp(m_pred, 1e-7f, 1.0f - 1e-7f);
  const Tensor pos_term = mul(Tensor::from(m_pred.shape(), std::move(wy)), log(p));
  const Tensor neg_term = mul(Tensor::from(m_pred.shape(), std::move(ny)), log(add_scalar(scale(p, -1.0f), 1.0f)));
  return LossTerm{scale(mean(add(pos_term, neg_term)), -1.0f), false};
}

std::vector<Coord3> predicted_keypoints(const Tensor& m_pred, const ECConfig& cfg) {
  check_probability_map(m_pred, "predicted_keypoints");
  const Dims3 d = map_dims(m_pred);
  const auto prob = m_pred.data();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < prob.size(); ++i)
    if (prob[i] > 0.5f) idx.push_back(i);
  const auto cap = static_cast<std::size_t>(cfg.max_candidates);
  if (idx.size() > cap) {
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cap), idx.end(),
                      [&](std::size_t a, std::size_t b) { return prob[a] != prob[b] ? prob[a] > prob[b] : a < b; });
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<BoundaryPoint> candidates;
  const std::size_t plane = static_cast<std::size_t>(d[1]) * d[2];
  for (std::size_t i : idx) {
    const Coord3 c{static_cast<int>(i / plane), static_cast<int>(i % plane / d[2]), static_cast<int>(i % d[2])};
    candidates.push_back({c, prob[i], prob[i]});
  }
  std::vector<Coord3> out;
  for (const auto& p : nms_filter(candidates, cfg.k)) out.push_back(p.pos);
  return out;
}

std::vector<Coord3> chain_points(std::vector<Coord3> points) {
  if (points.empty()) return points;
  std::sort(points.begin(), points.end());
  std::vector<Coord3> chain{points.front()};
  std::vector<bool> used(points.size(), false);
  used[0] = true;
  for (std::size_t step = 1; step < points.size(); ++step) {
    std::size_t best = 0;
    long best_d = std::numeric_limits<long>::max();
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (used[j]) continue;
      const long dj = dist2(chain.back(), points[j]);
      if (dj < best_d) best_d = dj, best = j;  // sorted input: first hit is lexicographically smallest
    }
    used[best] = true;
    chain.push_back(points[best]);
  }
  return chain;
}

LossTerm continuity_loss(const Tensor& m_pred, const std::vector<Coord3>& pred_points,
                         const std::vector<Coord3>& truth_points, double epsilon) {
  check_probability_map(m_pred, "continuity_loss");
  if (pred_points.size() < 2 || truth_points.empty()) return skipped_term();
  const Dims3 d = map_dims(m_pred);
  const std::vector<Coord3> chain = chain_points(pred_points);
  const std::size_t n = chain.size();
  std::vector<double> to_truth(n);
  std::vector<std::size_t> flat(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_bounds(d, chain[i][0], chain[i][1], chain[i][2])) {
      throw DimensionError("continuity_loss: predicted point outside the map");
    }
    long best = std::numeric_limits<long>::max();
    for (const Coord3& t : truth_points) best = std::min(best, dist2(chain[i], t));
    to_truth[i] = std::sqrt(static_cast<double>(best));
    flat[i] = flat_index(d, chain[i][0], chain[i][1], chain[i][2]);
  }
  std::vector<float> rho(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double step = std::sqrt(static_cast<double>(dist2(chain[i], chain[i + 1])));
    rho[i] = static_cast<float>(std::abs(to_truth[i] - to_truth[i + 1]) / (step + epsilon));
  }
  const Tensor m = gather(m_pred, flat);
  const int pairs = static_cast<int>(n - 1);
  const Tensor jumps = abs(sub(narrow0(m, 0, pairs), narrow0(m, 1, pairs)));
  return LossTerm{mean(mul(Tensor::from({pairs}, std::move(rho)), jumps)), false};
}

Tensor ec_loss(const LossTerm& match, const LossTerm& cont) {
  if (match.skipped && cont.skipped) return Tensor::scalar(0.0f);
  if (match.skipped) return scale(cont.value, 0.5f);
  if (cont.skipped) return scale(match.value, 0.5f);
  return scale(add(match.value, cont.value), 0.5f);
}

}  // namespace fass
