#include "fass/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "fass/errors.hpp"

namespace fass {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor shape " + shape_str(shape) + " contains a non-positive dimension");
  }
}

std::shared_ptr<detail::Node> new_node(const Shape& shape, std::vector<float> values) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("data length " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->data = std::move(values);
  return node;
}

}  // namespace

void detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0f); }

Tensor Tensor::full(const Shape& shape, float value) {
  check_shape(shape);
  return Tensor(new_node(shape, std::vector<float>(shape_numel(shape), value)));
}

Tensor Tensor::from(const Shape& shape, std::vector<float> values) {
  return Tensor(new_node(shape, std::move(values)));
}

Tensor Tensor::scalar(float value) { return Tensor(new_node({1}, {value})); }

const Shape& Tensor::shape() const { return node_->shape; }

int Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("axis out of range for shape " + shape_str(shape()));
  return node_->shape[static_cast<std::size_t>(axis)];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const float> Tensor::data() const { return node_->data; }

std::span<float> Tensor::mutable_data() { return node_->data; }

std::vector<float> Tensor::to_vector() const { return node_->data; }

float Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

float Tensor::at(std::initializer_list<int> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank does not match tensor rank");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (int i : index) {
    if (i < 0 || i >= s[axis]) throw DimensionError("index out of range");
    flat = flat * static_cast<std::size_t>(s[axis]) + static_cast<std::size_t>(i);
    ++axis;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const float> Tensor::grad() const { return node_->grad; }

std::span<float> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  return Tensor(node);
}

bool Tensor::is_leaf() const { return !node_->backward; }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor detail::make_result(Shape shape, std::vector<float> data, std::vector<Tensor> inputs,
                           BackwardFn fn) {
  auto node = new_node(shape, std::move(data));
  if (!g_grad_enabled) return Tensor(node);
  bool any = false;
  for (const Tensor& t : inputs) any = any || t.requires_grad();
  if (!any) return Tensor(node);
  node->requires_grad = true;
  node->inputs.reserve(inputs.size());
  for (const Tensor& t : inputs) node->inputs.push_back(t.node());
  node->backward = std::move(fn);
  return Tensor(node);
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  detail::Node* root = loss.node().get();
  if (root->consumed) throw StateError("backward already ran on this tape");
  if (!root->requires_grad) throw ContractError("loss is not connected to any requires_grad tensor");

  // Iterative post-order DFS gives a topological order of the tape.
  // Nodes are held by shared_ptr because clearing a node's inputs below may
  // drop the last reference to a child that is still pending.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->inputs.size()) {
      std::shared_ptr<detail::Node> child = top.first->inputs[top.second++];
      if (child->requires_grad && child->backward && !seen.count(child.get())) {
        seen.insert(child.get());
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = it->get();
    if (node->backward && !node->grad.empty()) node->backward(*node);
    // Interior buffers are no longer needed once propagated.
    node->backward = nullptr;
    node->inputs.clear();
    node->consumed = true;
    if (node != root) {
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

}  // namespace fass
