#include "swintr/module.hpp"

#include <cmath>

namespace swintr {

Tensor Module::register_parameter(std::string name, Tensor t) {
  t.set_requires_grad(true);
  params_.emplace_back(std::move(name), t);
  return t;
}

Tensor Module::register_buffer(std::string name, Tensor t) {
  buffers_.emplace_back(std::move(name), t);
  return t;
}

void Module::collect(const std::string& prefix, bool params, bool buffers, std::vector<NamedTensor>& out) const {
  if (params) {
    for (const auto& [name, t] : params_) {
      out.emplace_back(prefix + name, t);
    }
  }
  if (buffers) {
    for (const auto& [name, t] : buffers_) {
      out.emplace_back(prefix + name, t);
    }
  }
  for (const auto& [name, child] : children_) {
    child->collect(prefix + name + ".", params, buffers, out);
  }
}

std::vector<NamedTensor> Module::named_parameters() const {
  std::vector<NamedTensor> out;
  collect("", true, false, out);
  return out;
}

std::vector<NamedTensor> Module::named_buffers() const {
  std::vector<NamedTensor> out;
  collect("", false, true, out);
  return out;
}

std::vector<NamedTensor> Module::named_state() const {
  auto out = named_parameters();
  auto buffers = named_buffers();
  out.insert(out.end(), buffers.begin(), buffers.end());
  return out;
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) {
    out.push_back(t);
  }
  return out;
}

std::int64_t Module::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& t : parameters()) {
    n += t.numel();
  }
  return n;
}

void Module::train(bool on) {
  training_ = on;
  for (auto& [name, child] : children_) {
    child->train(on);
  }
}

void Module::zero_grad() {
  for (auto& t : parameters()) {
    t.zero_grad();
  }
}

void Module::set_requires_grad(bool on) {
  for (auto& t : parameters()) {
    t.set_requires_grad(on);
  }
}

Conv2d::Conv2d(ModuleInit& init, std::int64_t in_channels, std::int64_t out_channels, int kernel, int padding,
               bool bias, bool zero_init)
    : padding_(padding) {
  const Shape shape{out_channels, in_channels, kernel, kernel};
  Tensor w = Tensor::zeros(shape, init.dtype);
  if (!zero_init) {
    const double fan_in = static_cast<double>(in_channels * kernel * kernel);
    const double bound = std::sqrt(6.0 / fan_in);
    w = Tensor::uniform(shape, init.rng, -bound, bound, init.dtype);
  }
  weight_ = register_parameter("weight", w);
  if (bias) {
    bias_ = register_parameter("bias", Tensor::zeros({out_channels}, init.dtype));
  }
}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, weight_, bias_, 1, padding_); }

BatchNorm2d::BatchNorm2d(ModuleInit& init, std::int64_t channels) {
  gain_ = register_parameter("gain", Tensor::ones({channels}, init.dtype));
  shift_ = register_parameter("shift", Tensor::zeros({channels}, init.dtype));
  running_mean_ = register_buffer("running_mean", Tensor::zeros({channels}, init.dtype));
  running_var_ = register_buffer("running_var", Tensor::ones({channels}, init.dtype));
}

Tensor BatchNorm2d::forward(const Tensor& x) {
  return batch_norm(x, running_mean_, running_var_, gain_, shift_, training());
}

Linear::Linear(ModuleInit& init, std::int64_t in_features, std::int64_t out_features, bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  weight_ = register_parameter("weight",
                               Tensor::uniform({out_features, in_features}, init.rng, -bound, bound, init.dtype));
  if (bias) {
    bias_ = register_parameter("bias", Tensor::zeros({out_features}, init.dtype));
  }
}

Tensor Linear::forward(const Tensor& x) const { return linear(x, weight_, bias_); }

LayerNorm::LayerNorm(ModuleInit& init, std::int64_t features) {
  gain_ = register_parameter("gain", Tensor::ones({features}, init.dtype));
  shift_ = register_parameter("shift", Tensor::zeros({features}, init.dtype));
}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gain_, shift_); }

ConvBnReluStack::ConvBnReluStack(ModuleInit& init, std::int64_t in_channels, std::int64_t channels, int depth,
                                 int kernel) {
  for (int i = 0; i < depth; ++i) {
    auto* conv = register_module("conv" + std::to_string(i),
                                 std::make_unique<Conv2d>(init, i == 0 ? in_channels : channels, channels, kernel,
                                                          kernel / 2, false));
    auto* bn = register_module("bn" + std::to_string(i), std::make_unique<BatchNorm2d>(init, channels));
    layers_.emplace_back(conv, bn);
  }
}

Tensor ConvBnReluStack::forward(const Tensor& x) {
  Tensor h = x;
  for (auto& [conv, bn] : layers_) {
    h = relu(bn->forward(conv->forward(h)));
  }
  return h;
}

}  // namespace swintr
