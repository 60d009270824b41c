#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "swintr/ops.hpp"

namespace swintr {

using NamedTensor = std::pair<std::string, Tensor>;

// Parameter construction context shared by a model tree.
struct ModuleInit {
  std::mt19937_64 rng;
  DType dtype = DType::f32;

  explicit ModuleInit(std::uint64_t seed, DType dt = DType::f32) : rng(seed), dtype(dt) {}
};

// Owner of named parameters, buffers (non-trainable state such as running
// statistics) and child modules. Names are dot-joined paths.
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<NamedTensor> named_parameters() const;
  std::vector<NamedTensor> named_buffers() const;
  // Parameters followed by buffers: everything a checkpoint must carry.
  std::vector<NamedTensor> named_state() const;
  std::vector<Tensor> parameters() const;
  std::int64_t parameter_count() const;

  void train(bool on = true);
  bool training() const { return training_; }
  void zero_grad();
  void set_requires_grad(bool on);

 protected:
  Tensor register_parameter(std::string name, Tensor t);
  Tensor register_buffer(std::string name, Tensor t);
  template <typename M>
  M* register_module(std::string name, std::unique_ptr<M> child) {
    M* raw = child.get();
    children_.emplace_back(std::move(name), std::move(child));
    return raw;
  }

 private:
  void collect(const std::string& prefix, bool params, bool buffers, std::vector<NamedTensor>& out) const;

  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
  bool training_ = true;
};

class Conv2d : public Module {
 public:
  // He-uniform weights, zero bias. zero_init gives an all-zero layer.
  Conv2d(ModuleInit& init, std::int64_t in_channels, std::int64_t out_channels, int kernel, int padding, bool bias,
         bool zero_init = false);
  Tensor forward(const Tensor& x) const;
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  Tensor weight_;
  Tensor bias_;
  int padding_;
};

class BatchNorm2d : public Module {
 public:
  BatchNorm2d(ModuleInit& init, std::int64_t channels);
  Tensor forward(const Tensor& x);

 private:
  Tensor gain_;
  Tensor shift_;
  Tensor running_mean_;
  Tensor running_var_;
};

class Linear : public Module {
 public:
  Linear(ModuleInit& init, std::int64_t in_features, std::int64_t out_features, bool bias = true);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor weight_;
  Tensor bias_;
};

class LayerNorm : public Module {
 public:
  LayerNorm(ModuleInit& init, std::int64_t features);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor gain_;
  Tensor shift_;
};

// conv3x3 -> batch_norm -> relu, repeated.
class ConvBnReluStack : public Module {
 public:
  ConvBnReluStack(ModuleInit& init, std::int64_t in_channels, std::int64_t channels, int depth, int kernel = 3);
  Tensor forward(const Tensor& x);

 private:
  std::vector<std::pair<Conv2d*, BatchNorm2d*>> layers_;
};

}  // namespace swintr
