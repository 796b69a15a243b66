#include "fass/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fass/errors.hpp"
#include "fass/ops.hpp"

namespace fass {

namespace {

std::size_t spatial_size(const Tensor& t) { return t.numel() / static_cast<std::size_t>(t.dim(0)); }

void check_labels(const Tensor& t, const std::vector<std::uint8_t>& labels, const char* who) {
  if (t.rank() < 2) throw DimensionError(std::string(who) + ": expected [C, ...], got " + shape_str(t.shape()));
  if (labels.size() != spatial_size(t)) {
    throw DimensionError(std::string(who) + ": " + std::to_string(labels.size()) + " labels for " +
                         shape_str(t.shape()));
  }
  const int classes = t.dim(0);
  for (std::uint8_t l : labels)
    if (l >= classes) throw DimensionError(std::string(who) + ": label " + std::to_string(l) + " out of range");
}

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw NumericError(std::string("total_loss: non-finite ") + name + " = " + std::to_string(v));
}

}  // namespace

Tensor dice_loss(const Tensor& probs, const std::vector<std::uint8_t>& labels) {
  check_labels(probs, labels, "dice_loss");
  constexpr float kSmooth = 1e-5f;
  const int classes = probs.dim(0);
  if (classes < 2) throw DimensionError("dice_loss: need at least two classes");
  const std::size_t n = labels.size();
  Shape spatial = probs.shape();
  spatial[0] = 1;
  Tensor total;
  for (int c = 1; c < classes; ++c) {
    std::vector<float> y(n);
    float count = 0.0f;
    for (std::size_t i = 0; i < n; ++i) count += y[i] = labels[i] == c ? 1.0f : 0.0f;
    const Tensor p = narrow0(probs, c, 1);
    const Tensor inter = sum(mul(p, Tensor::from(spatial, std::move(y))));
    const Tensor ratio = div(add_scalar(scale(inter, 2.0f), kSmooth), add_scalar(sum(p), count + kSmooth));
    total = total.defined() ? add(total, ratio) : ratio;
  }
  return add_scalar(scale(total, -1.0f / static_cast<float>(classes - 1)), 1.0f);
}

Tensor ce_loss(const Tensor& logits, const std::vector<std::uint8_t>& labels) {
  check_labels(logits, labels, "ce_loss");
  const std::size_t n = labels.size();
  std::vector<std::size_t> picks(n);
  for (std::size_t i = 0; i < n; ++i) picks[i] = labels[i] * n + i;
  return scale(mean(gather(log_softmax(logits, 0), picks)), -1.0f);
}

Tensor sup_loss(const Tensor& dice, const Tensor& ce) { return scale(add(dice, ce), 0.5f); }

Tensor supervised_loss(const Tensor& logits, const std::vector<std::uint8_t>& labels) {
  return sup_loss(dice_loss(softmax(logits, 0), labels), ce_loss(logits, labels));
}

double ramp_lambda(long t, long t_max) {
  if (t_max <= 0) throw ConfigError("ramp_lambda: t_max must be positive");
  const double r = 1.0 - static_cast<double>(std::clamp(t, 0L, t_max)) / static_cast<double>(t_max);
  return 0.1 * std::exp(-5.0 * r * r);
}

TotalLoss total_loss(const Tensor& sup, const LossTerm& fa, const LossTerm& ec, double lambda) {
  TotalLoss out;
  LossBreakdown& b = out.breakdown;
  b.sup = sup.item();
  b.lambda = lambda;
  b.fa_skipped = fa.skipped;
  b.ec_skipped = ec.skipped;
  b.fa = fa.skipped ? 0.0 : fa.value.item();
  b.ec = ec.skipped ? 0.0 : ec.value.item();
  require_finite(b.sup, "L_sup");
  require_finite(b.fa, "L_D");
  require_finite(b.ec, "L_EC");
  require_finite(lambda, "lambda");
  Tensor aux;
  if (!fa.skipped) aux = fa.value;
  if (!ec.skipped) aux = aux.defined() ? add(aux, ec.value) : ec.value;
  out.total = aux.defined() ? add(sup, scale(aux, static_cast<float>(lambda))) : sup;
  b.total = out.total.item();
  require_finite(b.total, "L_total");
  return out;
}

}  // namespace fass
