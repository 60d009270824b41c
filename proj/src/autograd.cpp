#include "swintr/autograd.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace swintr {

namespace {

thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_next_seq = 0;

void accumulate_into(std::shared_ptr<Buffer>& slot, const Tensor& g) {
  if (!slot) {
    slot = std::make_shared<Buffer>(*g.impl()->data);
    return;
  }
  std::visit(
      [&](auto& acc) {
        using V = std::decay_t<decltype(acc)>;
        const auto& src = std::get<V>(*g.impl()->data);
        for (std::size_t i = 0; i < acc.size(); ++i) {
          acc[i] += src[i];
        }
      },
      *slot);
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) {
    return false;
  }
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t && t->defined() && t->requires_grad(); });
}

bool needs_grad(const std::vector<Tensor>& inputs) {
  if (!g_grad_enabled) {
    return false;
  }
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.defined() && t.requires_grad(); });
}

Tensor record(Tensor out, const char* op, const std::vector<Tensor>& inputs, BackwardFn backward) {
  if (!needs_grad(inputs)) {
    return out;
  }
  auto node = std::make_shared<Node>();
  node->seq = g_next_seq++;
  node->op = op;
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    node->inputs.push_back(in.defined() ? in.impl() : nullptr);
  }
  node->backward = std::move(backward);
  out.impl()->requires_grad = true;
  out.impl()->grad_fn = std::move(node);
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss");
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss is not connected to any tensor requiring grad");
  }
  const Tensor seed = Tensor::ones(loss.shape(), loss.dtype());
  TensorImpl* root = loss.impl().get();
  if (!root->grad_fn) {
    accumulate_into(root->grad, seed);
    return;
  }

  // Collect every non-leaf reachable from the loss.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen{root};
  std::vector<TensorImpl*> stack{root};
  while (!stack.empty()) {
    TensorImpl* cur = stack.back();
    stack.pop_back();
    order.push_back(cur);
    for (const auto& in : cur->grad_fn->inputs) {
      if (in && in->grad_fn && in->requires_grad && seen.insert(in.get()).second) {
        stack.push_back(in.get());
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const TensorImpl* a, const TensorImpl* b) { return a->grad_fn->seq > b->grad_fn->seq; });

  std::unordered_map<TensorImpl*, std::shared_ptr<Buffer>> pending;
  pending[root] = std::make_shared<Buffer>(*seed.impl()->data);
  for (TensorImpl* cur : order) {
    auto it = pending.find(cur);
    if (it == pending.end()) {
      continue;
    }
    auto gout_impl = std::make_shared<TensorImpl>();
    gout_impl->shape = cur->shape;
    gout_impl->dtype = cur->dtype;
    gout_impl->data = std::move(it->second);
    pending.erase(it);
    const Tensor grad_out(std::move(gout_impl));

    const Node& node = *cur->grad_fn;
    std::vector<Tensor> grads;
    {
      NoGradGuard no_grad;
      grads = node.backward(grad_out);
    }
    for (std::size_t i = 0; i < node.inputs.size() && i < grads.size(); ++i) {
      const auto& in = node.inputs[i];
      if (!in || !in->requires_grad || !grads[i].defined()) {
        continue;
      }
      if (grads[i].shape() != in->shape) {
        throw DimensionError(std::string("backward of ") + node.op + " produced gradient " +
                             shape_str(grads[i].shape()) + " for input " + shape_str(in->shape));
      }
      if (in->grad_fn) {
        accumulate_into(pending[in.get()], grads[i]);
      } else {
        accumulate_into(in->grad, grads[i]);
      }
    }
  }
}

}  // namespace swintr
