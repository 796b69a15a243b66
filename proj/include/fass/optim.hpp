#pragma once

#include <vector>

#include "fass/nn.hpp"

namespace fass {

struct SgdConfig {
  float lr = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
};

// Heavy-ball SGD with coupled weight decay:
//   d = g + wd p;  b = mu b + d;  p -= lr b.
// Parameters without a gradient are left untouched, buffers included.
class Sgd {
 public:
  Sgd(std::vector<NamedTensor> params, SgdConfig cfg);

  void zero_grad();
  void step();

  const std::vector<NamedTensor>& params() const { return params_; }
  std::vector<std::vector<float>>& momentum() { return momentum_; }
  const std::vector<std::vector<float>>& momentum() const { return momentum_; }

 private:
  std::vector<NamedTensor> params_;
  SgdConfig cfg_;
  std::vector<std::vector<float>> momentum_;
};

}  // namespace fass
