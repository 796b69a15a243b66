#include "fass/nn.hpp"

#include <cmath>

namespace fass {

Tensor normal_tensor(const Shape& shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = static_cast<float>(normal(rng));
  return Tensor::from(shape, std::move(v)).set_requires_grad(true);
}

Tensor kaiming_kernel(int out, int in, int k, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(in) * k * k * k;
  return normal_tensor({out, in, k, k, k}, std::sqrt(2.0 / fan_in), rng);
}

Tensor identity_kernel(int n) {
  std::vector<float> v(static_cast<std::size_t>(n) * n, 0.0f);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0f;
  return Tensor::from({n, n, 1, 1, 1}, std::move(v)).set_requires_grad(true);
}

BatchNorm::BatchNorm(int channels)
    : gamma_(Tensor::full({channels}, 1.0f).set_requires_grad(true)),
      beta_(Tensor::zeros({channels}).set_requires_grad(true)) {
  stats_.running_mean.assign(static_cast<std::size_t>(channels), 0.0f);
  stats_.running_var.assign(static_cast<std::size_t>(channels), 1.0f);
}

Tensor BatchNorm::forward(const Tensor& x, ForwardMode mode) {
  return batch_norm(x, gamma_, beta_, stats_, mode.training, mode.update_running_stats);
}

void BatchNorm::collect(const std::string& prefix, StateRefs& out) {
  out.parameters.push_back({prefix + ".gamma", gamma_});
  out.parameters.push_back({prefix + ".beta", beta_});
  out.buffers.push_back({prefix + ".running_mean", &stats_.running_mean});
  out.buffers.push_back({prefix + ".running_var", &stats_.running_var});
}

ConvBlock::ConvBlock(int in, int out, std::mt19937_64& rng)
    : w1_(kaiming_kernel(out, in, 3, rng)), w2_(kaiming_kernel(out, out, 3, rng)), bn1_(out), bn2_(out) {}

Tensor ConvBlock::forward(const Tensor& x, ForwardMode mode) {
  const Tensor h = relu(bn1_.forward(conv3d(x, w1_, 1, 1), mode));
  return relu(bn2_.forward(conv3d(h, w2_, 1, 1), mode));
}

void ConvBlock::collect(const std::string& prefix, StateRefs& out) {
  out.parameters.push_back({prefix + ".conv1", w1_});
  bn1_.collect(prefix + ".bn1", out);
  out.parameters.push_back({prefix + ".conv2", w2_});
  bn2_.collect(prefix + ".bn2", out);
}

ResidualBlock::ResidualBlock(int channels, std::mt19937_64& rng)
    : w1_(kaiming_kernel(channels, channels, 3, rng)),
      w2_(kaiming_kernel(channels, channels, 3, rng)),
      bn1_(channels),
      bn2_(channels) {}

Tensor ResidualBlock::forward(const Tensor& x, ForwardMode mode) {
  const Tensor h = relu(bn1_.forward(conv3d(x, w1_, 1, 1), mode));
  return relu(add(bn2_.forward(conv3d(h, w2_, 1, 1), mode), x));
}

void ResidualBlock::collect(const std::string& prefix, StateRefs& out) {
  out.parameters.push_back({prefix + ".conv1", w1_});
  bn1_.collect(prefix + ".bn1", out);
  out.parameters.push_back({prefix + ".conv2", w2_});
  bn2_.collect(prefix + ".bn2", out);
}

Pointwise::Pointwise(int in, int out, bool bias, std::mt19937_64& rng) : weight_(kaiming_kernel(out, in, 1, rng)) {
  if (bias) bias_ = Tensor::zeros({out}).set_requires_grad(true);
}

Tensor Pointwise::forward(const Tensor& x) const {
  const Tensor y = conv3d(x, weight_);
  return bias_.defined() ? add_channel_bias(y, bias_) : y;
}

void Pointwise::collect(const std::string& prefix, StateRefs& out) {
  out.parameters.push_back({prefix + ".weight", weight_});
  if (bias_.defined()) out.parameters.push_back({prefix + ".bias", bias_});
}

Tensor silu(const Tensor& x) { return mul(x, sigmoid(x)); }

}  // namespace fass
