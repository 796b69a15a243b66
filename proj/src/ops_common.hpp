#pragma once

#include "fass/errors.hpp"
#include "fass/tensor.hpp"

namespace fass::detail {

// Gradient buffer of an op input, or nullptr when that input is constant.
inline float* grad_ptr(Node& n) {
  if (!n.requires_grad) return nullptr;
  n.ensure_grad();
  return n.grad.data();
}

inline void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
  }
}

}  // namespace fass::detail
