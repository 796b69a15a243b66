#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "fass/nn.hpp"
#include "fass/wavelet.hpp"

namespace fass {

// Per-level cross-attention parameters, indexed H = 0, V = 1, D = 2.
struct AttentionParams {
  int channels = 0;
  int key_dim = 0;
  std::array<Tensor, 3> query;  // [C, d]
  std::array<Tensor, 3> key;    // [C, d]
  std::array<Pointwise, 3> fuse;  // W_X with zero-initialised bias

  static AttentionParams init(int channels, std::mt19937_64& rng, int key_dim = 0);
  void collect(const std::string& prefix, StateRefs& out);
};

// Per axial slice, with tokens = in-slice positions and channels as the
// embedding: returns X + softmax(Q K^T / sqrt(d)) V where Q = X Wq and keys
// and values come from the token concatenation [O1; O2]. All inputs are
// [C, D, h, w]; the result has the same shape.
Tensor attend_residual(const Tensor& x, const Tensor& o1, const Tensor& o2, const Tensor& wq, const Tensor& wk);

// Row-major [n, 2n] attention matrix of one slice, for inspection.
std::vector<float> attention_matrix(const Tensor& x, const Tensor& o1, const Tensor& o2, const Tensor& wq,
                                    const Tensor& wk, int slice);

// Each detail band attends over the other two, then X_bar = silu(W_X(.)).
// The approximation band is passed through unchanged.
SubbandSet cross_attention_enhance(const SubbandSet& bands, const AttentionParams& params);

class CbamGate {
 public:
  CbamGate() = default;
  CbamGate(int channels, std::mt19937_64& rng, int spatial_kernel = 7);

  Tensor residual(const Tensor& f, ForwardMode mode);
  // Sigmoid of the shared MLP applied to avg- and max-pooled descriptors: [C].
  Tensor channel_attention(const Tensor& r) const;
  // Sigmoid of a conv over stacked channel-mean and channel-max maps: [1, D, H, W].
  Tensor spatial_attention(const Tensor& r) const;
  // P = Mc (x) Ms over Res(f), every element in (0, 1).
  Tensor gate(const Tensor& f, ForwardMode mode);

  void collect(const std::string& prefix, StateRefs& out);

 private:
  ResidualBlock res_;
  Tensor w1_, b1_, w2_, b2_;  // MLP [h, C], [h], [C, h], [C]
  Tensor spatial_w_, spatial_b_;
  int spatial_kernel_ = 7;
};

// F_next' = W_fuse [F_next ; avgpool2(F_enh (.) P)] + b.
Tensor flfe_aggregate(const Tensor& f_next, const Tensor& f_enhanced, const Tensor& p, const Pointwise& fuse);

// One encoder transition l -> l+1.
class FlfeLevel {
 public:
  FlfeLevel() = default;
  FlfeLevel(int channels, int next_channels, const WaveletBasis& basis, std::mt19937_64& rng);

  // F_l' = idwt(enhance(dwt(F_l))).
  Tensor enhance(const Tensor& f) const;
  Tensor forward(const Tensor& f, const Tensor& f_next, ForwardMode mode);
  void collect(const std::string& prefix, StateRefs& out);

  const AttentionParams& attention() const { return attention_; }
  CbamGate& cbam() { return cbam_; }
  const Pointwise& fuse() const { return fuse_; }

 private:
  WaveletBasis basis_;
  AttentionParams attention_;
  CbamGate cbam_;
  Pointwise fuse_;
};

}  // namespace fass
