#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "fass/tensor.hpp"

namespace fass {

struct WaveletBasis {
  std::string name;
  std::vector<double> dec_lo;
  std::vector<double> dec_hi;
  std::vector<double> rec_lo;
  std::vector<double> rec_hi;

  int length() const { return static_cast<int>(dec_lo.size()); }

  // haar, db2, coif1 or bior2.4; anything else throws ConfigError.
  static WaveletBasis named(std::string_view name);
  static const std::vector<std::string>& names();
};

enum class Subband { L, H, V, D };

// Single-level 2D decomposition of every axial slice of a [C, D, H, W] map.
// H holds high-pass-along-rows detail, V high-pass-along-columns detail.
struct SubbandSet {
  Tensor L, H, V, D;
  int rows = 0;  // in-slice extent of the source before padding
  int cols = 0;

  const Tensor& band(Subband b) const;
  Tensor& band(Subband b);
};

// Periodized filter bank aligned with PyWavelets' "periodization" mode. Odd
// in-slice extents are first padded by one sample of symmetric extension.
SubbandSet dwt_slicewise(const Tensor& f, const WaveletBasis& basis);

// Inverse of dwt_slicewise, cropped back to the source extent.
Tensor idwt_slicewise(const SubbandSet& bands, const WaveletBasis& basis);

}  // namespace fass
