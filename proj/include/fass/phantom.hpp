#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fass/volume.hpp"

namespace fass {

// Synthetic low-contrast abdominal phantom: one ellipsoidal organ holding
// 1-3 ellipsoidal tumors, on a smoothly textured background. Intensities are
// on a [0, 1] scale and all mean differences are small relative to noise.
struct PhantomSpec {
  Dims3 dims{96, 96, 96};
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};

  // Organ semi-axes as fractions of the matching dimension.
  double organ_axis_min = 0.24;
  double organ_axis_max = 0.38;
  // Organ centre offset from the volume centre, fraction of dimension.
  double organ_center_jitter = 0.08;

  int tumor_count_min = 1;
  int tumor_count_max = 3;
  double tumor_radius_min = 4.0;  // voxels
  double tumor_radius_max = 9.0;

  double background_mean = 0.45;
  double organ_delta = 0.08;     // |mu_organ - mu_background|
  double contrast_delta = 0.05;  // |mu_tumor - mu_organ|, tumors hypodense
  double texture_amplitude = 0.03;
  int texture_cells = 8;  // coarse lattice size of the smoothed noise
  double noise_sigma = 0.02;

  std::uint64_t seed = 0;

  void validate() const;
};

struct Ellipsoid {
  std::array<double, 3> center{};
  std::array<double, 3> semi_axes{};

  bool contains(double z, double y, double x) const;
  double analytic_volume() const;
};

struct PhantomGeometry {
  Ellipsoid organ;
  std::vector<Ellipsoid> tumors;
};

struct Phantom {
  Volume volume;
  PhantomGeometry geometry;
};

// Pure function of the spec (including its seed).
Phantom generate_phantom_with_geometry(const PhantomSpec& spec);
Volume generate_phantom(const PhantomSpec& spec);

}  // namespace fass
