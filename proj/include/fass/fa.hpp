#pragma once

#include <cstddef>
#include <random>

#include "fass/tensor.hpp"
#include "fass/volume.hpp"

namespace fass {

struct FAConfig {
  double alpha = 0.1;
  Dims3 bg_size{32, 32, 32};
  int max_attempts = 1000;
  // Stop gradients through the background encoding.
  bool detach_background = false;
};

struct BackgroundPatch {
  Coord3 origin{};
  Dims3 size{};
  std::size_t overlap_count = 0;
  double overlap_fraction = 0.0;
  int attempts = 0;
};

// Number of voxels set in both masks.
std::size_t intersect_count(const Mask& a, const Mask& b);

// Constant-time foreground counts over axis-aligned boxes.
class BoxCounter {
 public:
  explicit BoxCounter(const Mask& mask);
  std::size_t count(const Coord3& origin, const Dims3& size) const;
  const Dims3& dims() const { return dims_; }

 private:
  Dims3 dims_;
  std::vector<std::uint32_t> table_;  // (D+1)(H+1)(W+1) inclusive prefix sums
};

// Draws origins uniformly from [0, patch - bg] per axis until the background
// box overlaps the foreground by a fraction strictly below alpha. Throws
// SamplingExhausted after cfg.max_attempts rejections.
BackgroundPatch sample_background(const Mask& foreground, const FAConfig& cfg, std::mt19937_64& rng);
BackgroundPatch sample_background(const BoxCounter& foreground, const FAConfig& cfg, std::mt19937_64& rng);

// Intensities of the background box as a [1, d, h, w] tensor, edge-padded so
// every extent is a multiple of `multiple` and the in-slice extents reach
// `min_slice_extent`.
Tensor background_tensor(const Volume& patch, const BackgroundPatch& bg, int multiple = 8, int min_slice_extent = 0);

// softmax over channels of the spatially averaged features: [C, ...] -> [C].
Tensor feature_distribution(const Tensor& f);

// sum p log(p / q) with both arguments floored at 1e-8. Scalar.
Tensor kl_divergence(const Tensor& p, const Tensor& q);

// min(1, patch / volume) foreground voxel ratio; 0 when the volume has none.
double adaptive_weight(std::size_t patch_foreground, std::size_t volume_foreground);

// omega * exp(-KL(P(f_full) || P(f_bg))).
Tensor fa_loss(const Tensor& f_full, const Tensor& f_bg, double omega, bool detach_background = false);

// Running sampler statistics, reset once per epoch.
struct SamplerStats {
  std::size_t draws = 0;
  std::size_t accepted = 0;
  std::size_t exhausted = 0;
  double overlap_sum = 0.0;

  void record(const BackgroundPatch& bg);
  void record_exhausted(int attempts);
  double acceptance_rate() const;
  double mean_overlap() const;
};

}  // namespace fass
