#include "fass/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fass/errors.hpp"

namespace fass {

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a)
    if (dims[a] <= 0) throw ConfigError("phantom: dimensions must be positive");
  if (organ_axis_min <= 0 || organ_axis_max < organ_axis_min || organ_axis_max + organ_center_jitter >= 0.5) {
    throw ConfigError("phantom: organ axis range must fit inside the volume");
  }
  if (tumor_count_min < 0 || tumor_count_max < tumor_count_min) throw ConfigError("phantom: bad tumor count range");
  if (tumor_radius_min <= 0 || tumor_radius_max < tumor_radius_min) throw ConfigError("phantom: bad tumor radius range");
  if (contrast_delta < 0 || noise_sigma < 0 || organ_delta < 0 || texture_amplitude < 0) {
    throw ConfigError("phantom: contrast, noise and texture parameters must be non-negative");
  }
  if (texture_cells < 2) throw ConfigError("phantom: texture lattice needs at least 2 cells");
}

bool Ellipsoid::contains(double z, double y, double x) const {
  const double dz = (z - center[0]) / semi_axes[0];
  const double dy = (y - center[1]) / semi_axes[1];
  const double dx = (x - center[2]) / semi_axes[2];
  return dz * dz + dy * dy + dx * dx <= 1.0;
}

double Ellipsoid::analytic_volume() const {
  return 4.0 / 3.0 * std::numbers::pi * semi_axes[0] * semi_axes[1] * semi_axes[2];
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Trilinear interpolation of a coarse Gaussian lattice.
std::vector<float> smooth_texture(const PhantomSpec& spec, std::mt19937_64& rng) {
  const int n = spec.texture_cells;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> lattice(static_cast<std::size_t>(n) * n * n);
  for (double& v : lattice) v = normal(rng);
  const Dims3& d = spec.dims;
  std::vector<float> out(dims_volume(d));
  auto coord = [n](int i, int extent, int& lo, double& frac) {
    const double t = extent > 1 ? static_cast<double>(i) * (n - 1) / (extent - 1) : 0.0;
    lo = std::min(static_cast<int>(t), n - 2);
    frac = t - lo;
  };
  auto at = [&](int a, int b, int c) { return lattice[(static_cast<std::size_t>(a) * n + b) * n + c]; };
  for (int z = 0; z < d[0]; ++z) {
    int z0;
    double fz;
    coord(z, d[0], z0, fz);
    for (int y = 0; y < d[1]; ++y) {
      int y0;
      double fy;
      coord(y, d[1], y0, fy);
      for (int x = 0; x < d[2]; ++x) {
        int x0;
        double fx;
        coord(x, d[2], x0, fx);
        double v = 0.0;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const double w = (dz ? fz : 1 - fz) * (dy ? fy : 1 - fy) * (dx ? fx : 1 - fx);
              v += w * at(z0 + dz, y0 + dy, x0 + dx);
            }
        out[flat_index(d, z, y, x)] = static_cast<float>(spec.texture_amplitude * v);
      }
    }
  }
  return out;
}

// Tumor must sit strictly inside the organ: every tumor voxel and its six
// face neighbours lie inside the organ ellipsoid.
bool strictly_inside(const Ellipsoid& tumor, const Ellipsoid& organ, const Dims3& d) {
  std::array<int, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max(0, static_cast<int>(std::floor(tumor.center[a] - tumor.semi_axes[a])));
    hi[a] = std::min(d[a] - 1, static_cast<int>(std::ceil(tumor.center[a] + tumor.semi_axes[a])));
  }
  bool any = false;
  for (int z = lo[0]; z <= hi[0]; ++z)
    for (int y = lo[1]; y <= hi[1]; ++y)
      for (int x = lo[2]; x <= hi[2]; ++x) {
        if (!tumor.contains(z, y, x)) continue;
        any = true;
        static constexpr int kOffsets[7][3] = {{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                               {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
        for (const auto& o : kOffsets) {
          const int zz = z + o[0], yy = y + o[1], xx = x + o[2];
          if (!in_bounds(d, zz, yy, xx) || !organ.contains(zz, yy, xx)) return false;
        }
      }
  return any;
}

}  // namespace

Phantom generate_phantom_with_geometry(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const Dims3& d = spec.dims;

  Phantom result;
  Ellipsoid& organ = result.geometry.organ;
  for (int a = 0; a < 3; ++a) {
    organ.semi_axes[a] = uniform(rng, spec.organ_axis_min, spec.organ_axis_max) * d[a];
    organ.center[a] = (d[a] - 1) / 2.0 + uniform(rng, -spec.organ_center_jitter, spec.organ_center_jitter) * d[a];
  }

  const int tumor_count = std::uniform_int_distribution<int>(spec.tumor_count_min, spec.tumor_count_max)(rng);
  for (int t = 0; t < tumor_count; ++t) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      Ellipsoid tumor;
      for (int a = 0; a < 3; ++a) tumor.semi_axes[a] = uniform(rng, spec.tumor_radius_min, spec.tumor_radius_max);
      bool fits = true;
      for (int a = 0; a < 3; ++a) {
        const double reach = organ.semi_axes[a] - tumor.semi_axes[a];
        fits = fits && reach > 0;
        tumor.center[a] = organ.center[a] + (reach > 0 ? uniform(rng, -reach, reach) : 0.0);
      }
      if (fits && strictly_inside(tumor, organ, d)) {
        result.geometry.tumors.push_back(tumor);
        placed = true;
      }
    }
    if (!placed) throw GenerationError("phantom: tumor " + std::to_string(t) + " did not fit inside the organ");
  }

  std::vector<float> texture = smooth_texture(spec, rng);

  Volume& v = result.volume;
  v = Volume(d);
  v.spacing_mm = spec.spacing_mm;
  const double mu_b = spec.background_mean;
  const double mu_o = mu_b + spec.organ_delta;
  const double mu_t = mu_o - spec.contrast_delta;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int z = 0; z < d[0]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[2]; ++x) {
        std::uint8_t label = 0;
        if (organ.contains(z, y, x)) label = 1;
        for (const Ellipsoid& t : result.geometry.tumors)
          if (t.contains(z, y, x)) label = 2;
        const double mu = label == 0 ? mu_b : (label == 1 ? mu_o : mu_t);
        const std::size_t i = flat_index(d, z, y, x);
        // Always draw so the noise stream is independent of sigma.
        const double n = noise(rng);
        v.labels[i] = label;
        v.intensities[i] = static_cast<float>(mu + texture[i] + spec.noise_sigma * n);
      }
  return result;
}

Volume generate_phantom(const PhantomSpec& spec) { return generate_phantom_with_geometry(spec).volume; }

}  // namespace fass
