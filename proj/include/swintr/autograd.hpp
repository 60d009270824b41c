#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "swintr/tensor.hpp"

namespace swintr {

// Backward rule: maps the gradient of a node's output to one gradient per
// input. An undefined Tensor means "no gradient for this input".
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

// One recorded operation. seq is a per-thread creation counter, so sorting
// nodes by seq gives a topological order of the tape.
struct Node {
  std::uint64_t seq = 0;
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

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

// True when an op over these inputs should be recorded.
bool needs_grad(std::initializer_list<const Tensor*> inputs);
bool needs_grad(const std::vector<Tensor>& inputs);

// Attaches a tape node to `out` when any input requires grad and grad mode is on.
Tensor record(Tensor out, const char* op, const std::vector<Tensor>& inputs, BackwardFn backward);

// Reverse sweep from a scalar loss. Leaf gradients accumulate.
void backward(const Tensor& loss);

}  // namespace swintr
