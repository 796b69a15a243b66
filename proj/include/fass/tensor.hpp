#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fass {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the computation tape. A node with a backward closure was
// produced by a differentiable op; a node without one is a leaf.
struct Node {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until the first accumulation
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void ensure_grad();
};

}  // namespace detail

// Dense row-major float tensor with optional reverse-mode gradient.
//
// Tensors share their storage on copy (handle semantics, like most tensor
// libraries). Values are treated as immutable once an op has consumed them;
// only parameters are written in place, by the optimizer, between steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, float value);
  static Tensor from(const Shape& shape, std::vector<float> values);
  static Tensor scalar(float value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(int axis) const;
  int rank() const { return static_cast<int>(shape().size()); }
  std::size_t numel() const;

  std::span<const float> data() const;
  std::span<float> mutable_data();
  std::vector<float> to_vector() const;
  float item() const;
  float at(std::initializer_list<int> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();

  // A constant copy-free view on the same storage, cut from the tape.
  Tensor detach() const;

  bool is_leaf() const;

  // Internal: construct from an op result.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Grad mode is per thread. Inside a NoGradGuard scope ops record nothing.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Runs reverse-mode differentiation from a scalar loss. Gradients accumulate
// additively into every requires_grad leaf reachable from `loss`. The tape
// behind `loss` is released afterwards; a second call throws StateError.
void backward(const Tensor& loss);

namespace detail {

using BackwardFn = std::function<void(Node&)>;

// Wraps an op result. Records `inputs` and `fn` only when grad mode is on and
// at least one input requires grad.
Tensor make_result(Shape shape, std::vector<float> data,
                   std::vector<Tensor> inputs, BackwardFn fn);

}  // namespace detail

}  // namespace fass
