#include "swintr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace swintr {

std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    out << (i ? "," : "") << shape[i];
  }
  out << ')';
  return out.str();
}

const char* dtype_name(DType dtype) { return dtype == DType::f64 ? "f64" : "f32"; }

namespace {

void validate_shape(const Shape& shape) {
  for (auto extent : shape) {
    if (extent <= 0) {
      throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
  }
}

std::shared_ptr<Buffer> make_buffer(DType dtype, std::size_t n, double value) {
  if (dtype == DType::f64) {
    return std::make_shared<Buffer>(Storage<double>(n, value));
  }
  return std::make_shared<Buffer>(Storage<float>(n, static_cast<float>(value)));
}

Tensor make(Shape shape, DType dtype, std::shared_ptr<Buffer> data) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, DType dtype) { return full(std::move(shape), 0.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  validate_shape(shape);
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  return make(std::move(shape), dtype, make_buffer(dtype, n, value));
}

Tensor Tensor::from(Shape shape, std::vector<float> values) {
  validate_shape(shape);
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
    throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
  }
  return make(std::move(shape), DType::f32, std::make_shared<Buffer>(std::in_place_index<0>, values.begin(), values.end()));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  validate_shape(shape);
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
    throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
  }
  return make(std::move(shape), DType::f64, std::make_shared<Buffer>(std::in_place_index<1>, values.begin(), values.end()));
}

Tensor Tensor::from_doubles(Shape shape, const std::vector<double>& values, DType dtype) {
  if (dtype == DType::f64) {
    return from(std::move(shape), values);
  }
  return from(std::move(shape), std::vector<float>(values.begin(), values.end()));
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev, DType dtype) {
  Tensor t = zeros(std::move(shape), dtype);
  std::normal_distribution<double> dist(0.0, stddev);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : t.mutable_data<T>()) {
      v = static_cast<T>(dist(rng));
    }
  });
  return t;
}

Tensor Tensor::uniform(Shape shape, std::mt19937_64& rng, double lo, double hi, DType dtype) {
  Tensor t = zeros(std::move(shape), dtype);
  std::uniform_real_distribution<double> dist(lo, hi);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : t.mutable_data<T>()) {
      v = static_cast<T>(dist(rng));
    }
  });
  return t;
}

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(r));
  }
  return impl_->shape[static_cast<std::size_t>(a)];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() requires a single-element tensor, got " + shape_str(shape()));
  }
  return at(0);
}

double Tensor::at(std::int64_t flat_index) const {
  return std::visit([&](const auto& v) { return static_cast<double>(v.at(static_cast<std::size_t>(flat_index))); },
                    *impl_->data);
}

std::vector<double> Tensor::to_vector() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, *impl_->data);
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) {
    throw ContractError("requires_grad can only be set on leaf tensors");
  }
  impl_->requires_grad = on;
  return *this;
}

Tensor Tensor::grad() const {
  if (!impl_->grad) {
    throw ContractError("tensor has no gradient");
  }
  return make(impl_->shape, impl_->dtype, std::make_shared<Buffer>(*impl_->grad));
}

void Tensor::accumulate_grad(const Tensor& g) {
  if (g.shape() != shape() || g.dtype() != dtype()) {
    throw DimensionError("gradient shape " + shape_str(g.shape()) + " does not match tensor " + shape_str(shape()));
  }
  if (!impl_->grad) {
    impl_->grad = std::make_shared<Buffer>(*g.impl_->data);
    return;
  }
  std::visit(
      [&](auto& acc) {
        using V = std::decay_t<decltype(acc)>;
        const auto& src = std::get<V>(*g.impl_->data);
        for (std::size_t i = 0; i < acc.size(); ++i) {
          acc[i] += src[i];
        }
      },
      *impl_->grad);
}

Tensor Tensor::detach() const { return make(impl_->shape, impl_->dtype, impl_->data); }

Tensor Tensor::clone() const { return make(impl_->shape, impl_->dtype, std::make_shared<Buffer>(*impl_->data)); }

Tensor Tensor::to(DType target) const {
  if (target == dtype()) {
    return clone();
  }
  return from_doubles(shape(), to_vector(), target);
}

void Tensor::copy_from(const Tensor& src) {
  if (src.shape() != shape() || src.dtype() != dtype()) {
    throw DimensionError("copy_from: " + shape_str(src.shape()) + " into " + shape_str(shape()));
  }
  *impl_->data = *src.impl_->data;
}

void Tensor::fill(double value) {
  std::visit(
      [&](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        std::fill(v.begin(), v.end(), static_cast<T>(value));
      },
      *impl_->data);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) {
    return false;
  }
  return std::visit(
      [&](const auto& va) {
        using V = std::decay_t<decltype(va)>;
        const auto& vb = std::get<V>(*b.impl()->data);
        return std::memcmp(va.data(), vb.data(), va.size() * sizeof(typename V::value_type)) == 0;
      },
      *a.impl()->data);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const auto va = a.to_vector();
  const auto vb = b.to_vector();
  double m = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = std::abs(va[i] - vb[i]);
    if (std::isnan(d)) {
      return d;
    }
    m = std::max(m, d);
  }
  return m;
}

bool all_finite(const Tensor& t) {
  return std::visit(
      [](const auto& v) { return std::all_of(v.begin(), v.end(), [](auto x) { return std::isfinite(x); }); },
      *t.impl()->data);
}

}  // namespace swintr
