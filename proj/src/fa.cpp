#include "fass/fa.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fass/errors.hpp"
#include "fass/ops.hpp"

namespace fass {

namespace {

std::string dims_str(const Dims3& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

}  // namespace

std::size_t intersect_count(const Mask& a, const Mask& b) {
  if (a.dims != b.dims) throw DimensionError("intersect_count: masks " + dims_str(a.dims) + " and " + dims_str(b.dims));
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) n += (a.values[i] != 0 && b.values[i] != 0) ? 1 : 0;
  return n;
}

BoxCounter::BoxCounter(const Mask& mask) : dims_(mask.dims) {
  const std::size_t sy = static_cast<std::size_t>(dims_[2]) + 1;
  const std::size_t sz = sy * (static_cast<std::size_t>(dims_[1]) + 1);
  table_.assign(sz * (static_cast<std::size_t>(dims_[0]) + 1), 0);
  for (int z = 0; z < dims_[0]; ++z)
    for (int y = 0; y < dims_[1]; ++y)
      for (int x = 0; x < dims_[2]; ++x) {
        const std::size_t i = (z + 1) * sz + (y + 1) * sy + (x + 1);
        table_[i] = (mask.at(z, y, x) ? 1u : 0u) + table_[i - 1] + table_[i - sy] + table_[i - sz] - table_[i - 1 - sy] -
                    table_[i - 1 - sz] - table_[i - sy - sz] + table_[i - 1 - sy - sz];
      }
}

std::size_t BoxCounter::count(const Coord3& o, const Dims3& s) const {
  const std::size_t sy = static_cast<std::size_t>(dims_[2]) + 1;
  const std::size_t sz = sy * (static_cast<std::size_t>(dims_[1]) + 1);
  auto at = [&](int z, int y, int x) { return static_cast<std::int64_t>(table_[z * sz + y * sy + x]); };
  const int z0 = o[0], y0 = o[1], x0 = o[2], z1 = o[0] + s[0], y1 = o[1] + s[1], x1 = o[2] + s[2];
  return static_cast<std::size_t>(at(z1, y1, x1) - at(z0, y1, x1) - at(z1, y0, x1) - at(z1, y1, x0) + at(z0, y0, x1) +
                                  at(z0, y1, x0) + at(z1, y0, x0) - at(z0, y0, x0));
}

BackgroundPatch sample_background(const Mask& foreground, const FAConfig& cfg, std::mt19937_64& rng) {
  return sample_background(BoxCounter(foreground), cfg, rng);
}

BackgroundPatch sample_background(const BoxCounter& foreground, const FAConfig& cfg, std::mt19937_64& rng) {
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw ConfigError("sample_background: alpha must lie in [0, 1]");
  if (cfg.max_attempts < 1) throw ConfigError("sample_background: max_attempts must be positive");
  const Dims3& pd = foreground.dims();
  for (int a = 0; a < 3; ++a) {
    if (cfg.bg_size[a] < 1 || cfg.bg_size[a] > pd[a]) {
      throw ConfigError("sample_background: background " + dims_str(cfg.bg_size) + " does not fit patch " +
                        dims_str(pd));
    }
  }
  const double volume = static_cast<double>(dims_volume(cfg.bg_size));
  std::array<std::uniform_int_distribution<int>, 3> axis{
      std::uniform_int_distribution<int>(0, pd[0] - cfg.bg_size[0]),
      std::uniform_int_distribution<int>(0, pd[1] - cfg.bg_size[1]),
      std::uniform_int_distribution<int>(0, pd[2] - cfg.bg_size[2])};
  for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
    BackgroundPatch bg;
    for (int a = 0; a < 3; ++a) bg.origin[static_cast<std::size_t>(a)] = axis[static_cast<std::size_t>(a)](rng);
    bg.size = cfg.bg_size;
    bg.overlap_count = foreground.count(bg.origin, bg.size);
    bg.overlap_fraction = static_cast<double>(bg.overlap_count) / volume;
    bg.attempts = attempt;
    if (bg.overlap_fraction < cfg.alpha) return bg;
  }
  throw SamplingExhausted("sample_background: no " + dims_str(cfg.bg_size) + " region with overlap below " +
                          std::to_string(cfg.alpha) + " in " + std::to_string(cfg.max_attempts) + " attempts");
}

Tensor background_tensor(const Volume& patch, const BackgroundPatch& bg, int multiple, int min_slice_extent) {
  if (multiple < 1) throw ConfigError("background_tensor: multiple must be positive");
  Dims3 out{};
  for (int a = 0; a < 3; ++a) {
    const int want = a == 0 ? bg.size[a] : std::max(bg.size[a], min_slice_extent);
    out[a] = (want + multiple - 1) / multiple * multiple;
  }
  std::vector<float> values(dims_volume(out));
  std::size_t i = 0;
  for (int z = 0; z < out[0]; ++z)
    for (int y = 0; y < out[1]; ++y)
      for (int x = 0; x < out[2]; ++x) {
        const int sz = bg.origin[0] + std::min(z, bg.size[0] - 1);
        const int sy = bg.origin[1] + std::min(y, bg.size[1] - 1);
        const int sx = bg.origin[2] + std::min(x, bg.size[2] - 1);
        values[i++] = patch.intensity(sz, sy, sx);
      }
  return Tensor::from({1, out[0], out[1], out[2]}, std::move(values));
}

Tensor feature_distribution(const Tensor& f) {
  if (f.rank() < 2 || f.dim(0) < 2) {
    throw DimensionError("feature_distribution: need [C >= 2, ...], got " + shape_str(f.shape()));
  }
  return softmax(mean_spatial(f), 0);
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
  if (p.shape() != q.shape()) {
    throw DimensionError("kl_divergence: " + shape_str(p.shape()) + " vs " + shape_str(q.shape()));
  }
  constexpr float kFloor = 1e-8f;
  return sum(mul(p, sub(log(clamp(p, kFloor, 1.0f)), log(clamp(q, kFloor, 1.0f)))));
}

double adaptive_weight(std::size_t patch_foreground, std::size_t volume_foreground) {
  if (volume_foreground == 0) return 0.0;
  return std::min(1.0, static_cast<double>(patch_foreground) / static_cast<double>(volume_foreground));
}

Tensor fa_loss(const Tensor& f_full, const Tensor& f_bg, double omega, bool detach_background) {
  const Tensor p_full = feature_distribution(f_full);
  const Tensor p_bg = feature_distribution(detach_background ? f_bg.detach() : f_bg);
  return scale(exp(scale(kl_divergence(p_full, p_bg), -1.0f)), static_cast<float>(omega));
}

void SamplerStats::record(const BackgroundPatch& bg) {
  draws += static_cast<std::size_t>(bg.attempts);
  ++accepted;
  overlap_sum += bg.overlap_fraction;
}

void SamplerStats::record_exhausted(int attempts) {
  draws += static_cast<std::size_t>(attempts);
  ++exhausted;
}

double SamplerStats::acceptance_rate() const {
  return draws == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(draws);
}

double SamplerStats::mean_overlap() const { return accepted == 0 ? 0.0 : overlap_sum / static_cast<double>(accepted); }

}  // namespace fass
