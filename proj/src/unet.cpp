#include "fass/unet.hpp"

#include <random>

#include "fass/errors.hpp"
#include "fass/ops.hpp"

namespace fass {
inline namespace FASS_MODEL_NS {

bool modules_compiled() {
#ifdef FASS_BASELINE_ONLY
  return false;
#else
  return true;
#endif
}

namespace {

// Independent parameter streams, so optional modules never shift the
// backbone initialisation.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

}  // namespace

UNet3D::UNet3D(const UNetConfig& config) : config_(config) {
  if (config.base_channels < 1 || config.num_classes < 2 || config.in_channels < 1) {
    throw ConfigError("unet: base_channels >= 1, num_classes >= 2 and in_channels >= 1 required");
  }
  std::mt19937_64 rng = substream(config.seed, 1);
  int in = config.in_channels;
  for (int l = 0; l < kLevels; ++l) {
    encoder_[static_cast<std::size_t>(l)] = ConvBlock(in, channels(l), rng);
    in = channels(l);
  }
  for (int l = kLevels - 2; l >= 0; --l) {
    const auto i = static_cast<std::size_t>(l);
    reduce_[i] = Pointwise(channels(l + 1), channels(l), false, rng);
    decoder_[i] = ConvBlock(2 * channels(l), channels(l), rng);
  }
  seg_head_ = Pointwise(channels(0), config.num_classes, true, rng);
  boundary_head_ = Pointwise(channels(0), 1, true, rng);
#ifndef FASS_BASELINE_ONLY
  std::mt19937_64 flfe_rng = substream(config.seed, 2);
  const WaveletBasis basis = WaveletBasis::named(config.wavelet);
  for (int l = 0; l < kLevels - 1; ++l) flfe_[static_cast<std::size_t>(l)] = FlfeLevel(channels(l), channels(l + 1), basis, flfe_rng);
#endif
}

std::vector<Tensor> UNet3D::encode(const Tensor& patch, bool flfe_enabled, ForwardMode mode) {
  if (patch.rank() != 4 || patch.dim(0) != config_.in_channels) {
    throw DimensionError("unet: expected patch [" + std::to_string(config_.in_channels) + ", D, H, W], got " +
                         shape_str(patch.shape()));
  }
  for (int a = 1; a < 4; ++a) {
    if (patch.dim(a) % 8 != 0) {
      throw ConfigError("unet: patch dims " + shape_str(patch.shape()) + " must be divisible by 8");
    }
  }
#ifdef FASS_BASELINE_ONLY
  if (flfe_enabled) throw ConfigError("unet: FLFE is not compiled into this build");
#endif
  std::vector<Tensor> features;
  features.push_back(encoder_[0].forward(patch, mode));
  for (int l = 1; l < kLevels; ++l) {
    Tensor next = encoder_[static_cast<std::size_t>(l)].forward(avg_pool2(features.back()), mode);
#ifndef FASS_BASELINE_ONLY
    if (flfe_enabled) next = flfe_[static_cast<std::size_t>(l - 1)].forward(features.back(), next, mode);
#endif
    features.push_back(std::move(next));
  }
  return features;
}

SegOutput UNet3D::decode(const std::vector<Tensor>& features, ForwardMode mode) {
  if (features.size() != kLevels) throw DimensionError("unet: decode expects 4 feature maps");
  for (int l = 0; l < kLevels; ++l) {
    if (features[static_cast<std::size_t>(l)].dim(0) != channels(l)) {
      throw DimensionError("unet: feature " + std::to_string(l + 1) + " has shape " +
                           shape_str(features[static_cast<std::size_t>(l)].shape()) + ", expected " +
                           std::to_string(channels(l)) + " channels");
    }
  }
  Tensor d = features.back();
  for (int l = kLevels - 2; l >= 0; --l) {
    const auto i = static_cast<std::size_t>(l);
    const Tensor up = upsample2(reduce_[i].forward(d));
    d = decoder_[i].forward(concat0({up, features[i]}), mode);
  }
  return SegOutput{seg_head_.forward(d), boundary_head_.forward(d)};
}

SegOutput UNet3D::forward(const Tensor& patch, bool flfe_enabled, ForwardMode mode) {
  return decode(encode(patch, flfe_enabled, mode), mode);
}

StateRefs UNet3D::state() {
  StateRefs refs;
  for (int l = 0; l < kLevels; ++l) encoder_[static_cast<std::size_t>(l)].collect("enc" + std::to_string(l + 1), refs);
  for (int l = kLevels - 2; l >= 0; --l) {
    const auto i = static_cast<std::size_t>(l);
    reduce_[i].collect("dec" + std::to_string(l + 1) + ".reduce", refs);
    decoder_[i].collect("dec" + std::to_string(l + 1) + ".block", refs);
  }
  seg_head_.collect("seg_head", refs);
  boundary_head_.collect("boundary_head", refs);
#ifndef FASS_BASELINE_ONLY
  for (int l = 0; l < kLevels - 1; ++l) flfe_[static_cast<std::size_t>(l)].collect("flfe" + std::to_string(l + 1), refs);
#endif
  return refs;
}

}  // namespace FASS_MODEL_NS
}  // namespace fass
