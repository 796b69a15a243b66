#pragma once

#include <cstdint>
#include <vector>

#include "fass/tensor.hpp"

namespace fass {

// An auxiliary loss that may be absent for a patch.
struct LossTerm {
  Tensor value;  // scalar
  bool skipped = false;
};

// 1 - mean over classes c >= 1 of (2 sum p y + s) / (sum p + sum y + s), s = 1e-5.
// probs: softmax output [C, D, H, W]; labels: D*H*W class indices.
Tensor dice_loss(const Tensor& probs, const std::vector<std::uint8_t>& labels);

// Mean voxel-wise categorical cross-entropy of logits [C, ...].
Tensor ce_loss(const Tensor& logits, const std::vector<std::uint8_t>& labels);

// (dice + ce) / 2.
Tensor sup_loss(const Tensor& dice, const Tensor& ce);

// Supervised loss of segmentation logits: softmax dice plus cross-entropy.
Tensor supervised_loss(const Tensor& logits, const std::vector<std::uint8_t>& labels);

// 0.1 exp(-5 (1 - t / t_max)^2), with t clamped to [0, t_max].
double ramp_lambda(long t, long t_max);

struct LossBreakdown {
  double sup = 0.0;
  double fa = 0.0;
  double ec = 0.0;
  double lambda = 0.0;
  double total = 0.0;
  bool fa_skipped = false;
  bool ec_skipped = false;
};

struct TotalLoss {
  Tensor total;
  LossBreakdown breakdown;
};

// sup + lambda (fa + ec); skipped terms contribute zero. When both auxiliary
// terms are skipped the supervised tensor itself is returned. Throws
// NumericError on a non-finite input.
TotalLoss total_loss(const Tensor& sup, const LossTerm& fa, const LossTerm& ec, double lambda);

}  // namespace fass
