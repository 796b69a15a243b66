#include "fass/optim.hpp"

#include "fass/errors.hpp"

namespace fass {

Sgd::Sgd(std::vector<NamedTensor> params, SgdConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg.lr > 0.0f) || cfg.momentum < 0.0f || cfg.weight_decay < 0.0f) {
    throw ConfigError("sgd: lr must be positive, momentum and weight decay non-negative");
  }
  for (const auto& p : params_) momentum_.emplace_back(p.tensor.numel(), 0.0f);
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Sgd::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& t = params_[k].tensor;
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    auto w = t.mutable_data();
    auto& b = momentum_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float d = g[i] + cfg_.weight_decay * w[i];
      b[i] = cfg_.momentum * b[i] + d;
      w[i] -= cfg_.lr * b[i];
    }
  }
}

}  // namespace fass
