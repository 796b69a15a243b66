#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fass/tensor.hpp"

namespace fass {

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

enum class ElementwiseOp { Add, Sub, Mul, Relu, Sigmoid, Exp, Log, Scale };

// Generic entry point. Binary kinds take `b`, which must match `a`'s shape or
// hold a single element. Scale multiplies by `factor`.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b = std::nullopt,
                   float factor = 1.0f);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor add_scalar(const Tensor& a, float value);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
// Values outside [lo, hi] are clipped and receive zero gradient.
Tensor clamp(const Tensor& a, float lo, float hi);

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, const Shape& shape);
// Explicit broadcast: every axis of `a` must equal the target or be 1.
Tensor expand(const Tensor& a, const Shape& shape);
Tensor concat0(const std::vector<Tensor>& parts);
Tensor narrow0(const Tensor& a, int start, int length);
Tensor transpose(const Tensor& a);
// Gathers flat element indices into a rank-1 tensor.
Tensor gather(const Tensor& a, const std::vector<std::size_t>& flat_indices);
// Zero-gradient-free copy of a rank >= 2 tensor with its last two axes padded
// by half-sample symmetric reflection (x[-1] = x[0], x[N] = x[N-1]).
Tensor pad_symmetric_last2(const Tensor& a, int pad_rows, int pad_cols);
// Keeps the leading `rows` x `cols` block of the last two axes.
Tensor crop_last2(const Tensor& a, int rows, int cols);

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// [C, spatial...] -> [C]
Tensor mean_spatial(const Tensor& a);
Tensor max_spatial(const Tensor& a);
// [C, spatial...] -> [1, spatial...]
Tensor mean_channels(const Tensor& a);
Tensor max_channels(const Tensor& a);

Tensor softmax(const Tensor& a, int axis);
Tensor log_softmax(const Tensor& a, int axis);

// ---------------------------------------------------------------------------
// Linear algebra and convolution
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// x: [C_in, D, H, W], kernel: [C_out, C_in, k, k, k] -> [C_out, D', H', W'].
// Cross-correlation (no kernel flip). k must be odd.
Tensor conv3d(const Tensor& x, const Tensor& kernel, int stride = 1, int padding = 0);
// Adds bias[c] to every element of channel c of x: [C, ...].
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

enum class ResizeMode { AvgPool2, NearestUpsample2 };

// Resizes every axis after the leading channel axis by a factor of two.
Tensor pool_resize(const Tensor& x, ResizeMode mode);
Tensor avg_pool2(const Tensor& x);
Tensor upsample2(const Tensor& x);

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

struct BatchNormStats {
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float momentum = 0.1f;
  float eps = 1e-5f;
};

// Per-channel normalization of [C, spatial...]. In training mode the batch
// statistics of `x` are used (and folded into `stats` when update_running);
// otherwise the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  bool training, bool update_running = true);

}  // namespace fass
