#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fass/volume.hpp"

namespace fass {

struct PairMetrics {
  double dice = 0.0;     // percent
  double jaccard = 0.0;  // percent
  double hd95_mm = 0.0;
  double asd_mm = 0.0;
  // One or both masks empty; distances then hold the volume diagonal (or 0).
  bool degenerate = false;
};

// Distance in mm from every voxel to the nearest voxel of `set`
// (exact separable transform). Infinite when the set is empty.
std::vector<double> distance_transform(const Mask& set, const std::array<double, 3>& spacing_mm);

// Overlap and surface-distance metrics of one binary pair. Surfaces are the
// inner 6-connected boundaries; 95HD is the linearly interpolated 95th
// percentile and ASD the mean of the pooled symmetric distances.
PairMetrics evaluate_pair(const Mask& pred, const Mask& truth, const std::array<double, 3>& spacing_mm);

struct MetricsReport {
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  std::vector<PairMetrics> per_class;  // index 0 is class 1
};

// Per-class metrics for label maps over classes 1 .. num_classes-1.
MetricsReport evaluate_metrics(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& truth,
                               const Dims3& dims, const std::array<double, 3>& spacing_mm, int num_classes);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

MeanStd mean_std(const std::vector<double>& values);

}  // namespace fass
