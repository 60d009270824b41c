#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <new>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "swintr/errors.hpp"

namespace swintr {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
const char* dtype_name(DType dtype);

// Calls f with a value of the scalar type matching dtype.
template <typename F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::f64) {
    return f(double{});
  }
  return f(float{});
}

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() {
  return DType::f32;
}
template <>
constexpr DType dtype_of<double>() {
  return DType::f64;
}

// Element storage starts on a cache-line boundary so vectorized kernels see the
// same alignment on every run; results must not depend on heap layout.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t alignment = 64;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{alignment}));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t{alignment}); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

template <typename T>
using Storage = std::vector<T, AlignedAllocator<T>>;

using Buffer = std::variant<Storage<float>, Storage<double>>;

struct Node;

struct TensorImpl {
  Shape shape;
  DType dtype = DType::f32;
  // Shared so that reshape and detach can alias without copying.
  std::shared_ptr<Buffer> data;
  bool requires_grad = false;
  std::shared_ptr<Buffer> grad;
  std::shared_ptr<Node> grad_fn;
};

// Reference-counted handle to a dense row-major array. Copies of a Tensor
// share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, DType dtype = DType::f32);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor ones(Shape shape, DType dtype = DType::f32) { return full(std::move(shape), 1.0, dtype); }
  static Tensor from(Shape shape, std::vector<float> values);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor from_doubles(Shape shape, const std::vector<double>& values, DType dtype);
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0, DType dtype = DType::f32);
  static Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi, DType dtype = DType::f32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  std::int64_t numel() const { return shape_numel(impl_->shape); }
  DType dtype() const { return impl_->dtype; }

  template <typename T>
  std::span<const T> data() const {
    check_dtype<T>();
    return std::get<Storage<T>>(*impl_->data);
  }
  template <typename T>
  std::span<T> mutable_data() {
    check_dtype<T>();
    return std::get<Storage<T>>(*impl_->data);
  }
  double item() const;
  double at(std::int64_t flat_index) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return impl_->grad_fn == nullptr; }
  bool has_grad() const { return impl_->grad != nullptr; }
  // Copy of the accumulated gradient as an untracked tensor.
  Tensor grad() const;
  template <typename T>
  std::span<const T> grad_data() const {
    check_dtype<T>();
    if (!impl_->grad) {
      throw ContractError("tensor has no gradient");
    }
    return std::get<Storage<T>>(*impl_->grad);
  }
  void zero_grad() { impl_->grad.reset(); }
  void accumulate_grad(const Tensor& g);

  // Same storage, no history.
  Tensor detach() const;
  Tensor clone() const;
  Tensor to(DType dtype) const;
  // Overwrites the values of this tensor with those of src (same shape); not tracked.
  void copy_from(const Tensor& src);
  void fill(double value);

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  template <typename T>
  void check_dtype() const {
    if (impl_->dtype != dtype_of<T>()) {
      throw ContractError(std::string("dtype mismatch: tensor is ") + dtype_name(impl_->dtype));
    }
  }

  std::shared_ptr<TensorImpl> impl_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

}  // namespace swintr
