#include <algorithm>
#include <cmath>

#include "fass/ops.hpp"
#include "ops_common.hpp"

namespace fass {

using detail::grad_ptr;
using detail::Node;

namespace {

enum class Binary { Add, Sub, Mul, Div };

Tensor binary(Binary kind, const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool b_scalar = b.numel() == 1;
  const bool a_scalar = a.numel() == 1;
  if (!same && !b_scalar && !a_scalar) {
    throw DimensionError("elementwise: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " are not compatible");
  }
  const Shape out_shape = (same || b_scalar) ? a.shape() : b.shape();
  const std::size_t n = shape_numel(out_shape);
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t sa = av.size() == 1 ? 0 : 1;
  const std::size_t sb = bv.size() == 1 ? 0 : 1;
  std::vector<float> out(n);
  switch (kind) {
    case Binary::Add:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] + bv[i * sb];
      break;
    case Binary::Sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] - bv[i * sb];
      break;
    case Binary::Mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] * bv[i * sb];
      break;
    case Binary::Div:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] / bv[i * sb];
      break;
  }
  return detail::make_result(out_shape, std::move(out), {a, b}, [kind, sa, sb](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const std::size_t n = self.grad.size();
    const float* g = self.grad.data();
    if (float* ga = grad_ptr(na)) {
      for (std::size_t i = 0; i < n; ++i) {
        float d = g[i];
        if (kind == Binary::Mul) d = g[i] * nb.data[i * sb];
        if (kind == Binary::Div) d = g[i] / nb.data[i * sb];
        ga[i * sa] += d;
      }
    }
    if (float* gb = grad_ptr(nb)) {
      for (std::size_t i = 0; i < n; ++i) {
        float d = g[i];
        if (kind == Binary::Sub) d = -d;
        if (kind == Binary::Mul) d = g[i] * na.data[i * sa];
        if (kind == Binary::Div) {
          const float b = nb.data[i * sb];
          d = -g[i] * na.data[i * sa] / (b * b);
        }
        gb[i * sb] += d;
      }
    }
  });
}

// Unary op whose derivative is expressible from input x and output y.
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  const auto av = a.data();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return detail::make_result(a.shape(), std::move(out), {a}, [df](Node& self) {
    Node& na = *self.inputs[0];
    float* ga = grad_ptr(na);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * df(na.data[i], self.data[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(Binary::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Binary::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Binary::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(Binary::Div, a, b); }

Tensor scale(const Tensor& a, float factor) {
  return unary(
      a, [factor](float x) { return x * factor; }, [factor](float, float) { return factor; });
}

Tensor add_scalar(const Tensor& a, float value) {
  return unary(
      a, [value](float x) { return x + value; }, [](float, float) { return 1.0f; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](float x) { return x > 0.0f ? x : 0.0f; }, [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](float x) {
        if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
        const float e = std::exp(x);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](float x) { return std::exp(x); }, [](float, float y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](float x) { return std::log(x); }, [](float x, float) { return 1.0f / x; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](float x) { return std::fabs(x); },
      [](float x, float) { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); });
}

Tensor clamp(const Tensor& a, float lo, float hi) {
  if (lo > hi) throw ConfigError("clamp: lo > hi");
  return unary(
      a, [lo, hi](float x) { return std::clamp(x, lo, hi); },
      [lo, hi](float x, float) { return (x >= lo && x <= hi) ? 1.0f : 0.0f; });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b, float factor) {
  const bool binary_kind = op == ElementwiseOp::Add || op == ElementwiseOp::Sub || op == ElementwiseOp::Mul;
  if (binary_kind && !b) throw ContractError("elementwise: binary op requires a second operand");
  switch (op) {
    case ElementwiseOp::Add: return add(a, *b);
    case ElementwiseOp::Sub: return sub(a, *b);
    case ElementwiseOp::Mul: return mul(a, *b);
    case ElementwiseOp::Relu: return relu(a);
    case ElementwiseOp::Sigmoid: return sigmoid(a);
    case ElementwiseOp::Exp: return exp(a);
    case ElementwiseOp::Log: return log(a);
    case ElementwiseOp::Scale: return scale(a, factor);
  }
  throw ContractError("elementwise: unknown op");
}

}  // namespace fass
