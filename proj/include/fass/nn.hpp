#pragma once

#include <random>
#include <string>
#include <vector>

#include "fass/ops.hpp"
#include "fass/tensor.hpp"

namespace fass {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Non-learned state that still belongs in a checkpoint.
struct NamedBuffer {
  std::string name;
  std::vector<float>* values;
};

struct StateRefs {
  std::vector<NamedTensor> parameters;
  std::vector<NamedBuffer> buffers;
};

struct ForwardMode {
  bool training = true;
  bool update_running_stats = true;
};

// He-normal conv kernel [out, in, k, k, k].
Tensor kaiming_kernel(int out, int in, int k, std::mt19937_64& rng);
Tensor normal_tensor(const Shape& shape, double stddev, std::mt19937_64& rng);
// 1x1x1 kernel [n, n, 1, 1, 1] equal to the identity map.
Tensor identity_kernel(int n);

class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(int channels);
  Tensor forward(const Tensor& x, ForwardMode mode);
  void collect(const std::string& prefix, StateRefs& out);

 private:
  Tensor gamma_, beta_;
  BatchNormStats stats_;
};

// conv3x3 -> BN -> relu -> conv3x3 -> BN -> relu, no conv bias.
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(int in, int out, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, ForwardMode mode);
  void collect(const std::string& prefix, StateRefs& out);
  int out_channels() const { return w2_.dim(0); }

 private:
  Tensor w1_, w2_;
  BatchNorm bn1_, bn2_;
};

// relu(BN(conv(relu(BN(conv x)))) + x), channel count preserved.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(int channels, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, ForwardMode mode);
  void collect(const std::string& prefix, StateRefs& out);

 private:
  Tensor w1_, w2_;
  BatchNorm bn1_, bn2_;
};

// 1x1x1 convolution with optional bias.
class Pointwise {
 public:
  Pointwise() = default;
  Pointwise(Tensor weight, Tensor bias) : weight_(std::move(weight)), bias_(std::move(bias)) {}
  Pointwise(int in, int out, bool bias, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, StateRefs& out);
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_, bias_;
};

// x * sigmoid(x)
Tensor silu(const Tensor& x);

}  // namespace fass
