#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fass/nn.hpp"
#include "fass/tensor.hpp"

#ifdef FASS_BASELINE_ONLY
#define FASS_MODEL_NS baseline_build
#else
#define FASS_MODEL_NS full_build
#include "fass/flfe.hpp"
#endif

namespace fass {
inline namespace FASS_MODEL_NS {

// True when the FA, FLFE and EC modules are compiled in.
bool modules_compiled();

struct UNetConfig {
  int in_channels = 1;
  int base_channels = 8;
  int num_classes = 3;
  std::string wavelet = "db2";
  std::uint64_t seed = 0;
};

struct SegOutput {
  Tensor seg_logits;       // [num_classes, D, H, W]
  Tensor boundary_logits;  // [1, D, H, W]
};

// Four-level encoder-decoder. Encoder level l has base * 2^(l-1) channels at
// 1 / 2^(l-1) of the input resolution; levels are joined by avg_pool2.
class UNet3D {
 public:
  static constexpr int kLevels = 4;

  explicit UNet3D(const UNetConfig& config);

  std::vector<Tensor> encode(const Tensor& patch, bool flfe_enabled, ForwardMode mode);
  SegOutput decode(const std::vector<Tensor>& features, ForwardMode mode);
  SegOutput forward(const Tensor& patch, bool flfe_enabled, ForwardMode mode);

  // Parameters and buffers in a fixed serialization order.
  StateRefs state();
  const UNetConfig& config() const { return config_; }
  int channels(int level) const { return config_.base_channels << level; }

 private:
  UNetConfig config_;
  std::array<ConvBlock, kLevels> encoder_;
  std::array<Pointwise, kLevels - 1> reduce_;
  std::array<ConvBlock, kLevels - 1> decoder_;
  Pointwise seg_head_;
  Pointwise boundary_head_;
#ifndef FASS_BASELINE_ONLY
  std::array<FlfeLevel, kLevels - 1> flfe_;
#endif
};

}  // namespace FASS_MODEL_NS
}  // namespace fass
