#include <algorithm>
#include <cmath>
#include <numbers>

#include "swintr/ops.hpp"

namespace swintr {

namespace {

// Strides of `in` expressed in the index space of `out` (0 on broadcast axes).
std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::int64_t> strides(out.size(), 0);
  std::int64_t s = 1;
  const auto offset = out.size() - in.size();
  for (std::size_t i = in.size(); i-- > 0;) {
    strides[i + offset] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  return strides;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const auto rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Visits every output index with the matching offsets into two broadcast inputs.
template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<std::int64_t>& sa, const std::vector<std::int64_t>& sb,
                        F&& f) {
  const std::int64_t total = shape_numel(out);
  if (out.empty()) {
    f(0, 0, 0);
    return;
  }
  const std::size_t rank = out.size();
  const std::int64_t inner = out[rank - 1];
  const std::int64_t ia_step = sa[rank - 1];
  const std::int64_t ib_step = sb[rank - 1];
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t oa = 0;
  std::int64_t ob = 0;
  for (std::int64_t base = 0; base < total; base += inner) {
    for (std::int64_t j = 0; j < inner; ++j) {
      f(base + j, oa + j * ia_step, ob + j * ib_step);
    }
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) {
        break;
      }
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

// Sums a gradient laid out in `grad`'s shape down to a broadcast source shape.
Tensor reduce_to(const Tensor& grad, const Shape& target) {
  if (grad.shape() == target) {
    return grad;
  }
  Tensor out = Tensor::zeros(target, grad.dtype());
  const auto st = broadcast_strides(target, grad.shape());
  const std::vector<std::int64_t> none(grad.shape().size(), 0);
  dispatch(grad.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto g = grad.data<T>();
    auto o = out.mutable_data<T>();
    for_each_broadcast(grad.shape(), st, none, [&](std::int64_t i, std::int64_t it, std::int64_t) { o[it] += g[i]; });
  });
  return out;
}

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw ContractError(std::string(op) + ": dtype mismatch");
  }
}

enum class BinOp { add, sub, mul };

Tensor binary_forward(const Tensor& a, const Tensor& b, BinOp op) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto pa = a.data<T>();
    auto pb = b.data<T>();
    auto po = out.mutable_data<T>();
    auto apply = [op](T x, T y) { return op == BinOp::add ? x + y : op == BinOp::sub ? x - y : x * y; };
    if (a.shape() == b.shape()) {
      for (std::size_t i = 0; i < po.size(); ++i) {
        po[i] = apply(pa[i], pb[i]);
      }
      return;
    }
    for_each_broadcast(out_shape, broadcast_strides(a.shape(), out_shape), broadcast_strides(b.shape(), out_shape),
                       [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = apply(pa[ia], pb[ib]); });
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_dtype(a, b, "add");
  Tensor out = binary_forward(a, b, BinOp::add);
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  return record(out, "add", {a, b}, [sa, sb](const Tensor& g) -> std::vector<Tensor> {
    return {reduce_to(g, sa), reduce_to(g, sb)};
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_dtype(a, b, "sub");
  Tensor out = binary_forward(a, b, BinOp::sub);
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  return record(out, "sub", {a, b}, [sa, sb](const Tensor& g) -> std::vector<Tensor> {
    return {reduce_to(g, sa), reduce_to(mul_scalar(g, -1.0), sb)};
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_dtype(a, b, "mul");
  Tensor out = binary_forward(a, b, BinOp::mul);
  const Tensor ad = a.detach();
  const Tensor bd = b.detach();
  const bool need_a = a.requires_grad();
  const bool need_b = b.requires_grad();
  return record(out, "mul", {a, b}, [ad, bd, need_a, need_b](const Tensor& g) -> std::vector<Tensor> {
    Tensor ga;
    Tensor gb;
    if (need_a) {
      ga = reduce_to(binary_forward(g, bd, BinOp::mul), ad.shape());
    }
    if (need_b) {
      gb = reduce_to(binary_forward(g, ad, BinOp::mul), bd.shape());
    }
    return {ga, gb};
  });
}

Tensor mul_scalar(const Tensor& x, double s) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>();
    auto po = out.mutable_data<T>();
    const T k = static_cast<T>(s);
    for (std::size_t i = 0; i < po.size(); ++i) {
      po[i] = px[i] * k;
    }
  });
  return record(out, "mul_scalar", {x}, [s](const Tensor& g) -> std::vector<Tensor> { return {mul_scalar(g, s)}; });
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>();
    auto po = out.mutable_data<T>();
    for (std::size_t i = 0; i < po.size(); ++i) {
      po[i] = px[i] > T(0) ? px[i] : T(0);
    }
  });
  const Tensor od = out.detach();
  return record(out, "relu", {x}, [od](const Tensor& g) -> std::vector<Tensor> {
    Tensor gx = Tensor::zeros(g.shape(), g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto pg = g.data<T>();
      auto po = od.data<T>();
      auto px = gx.mutable_data<T>();
      for (std::size_t i = 0; i < px.size(); ++i) {
        px[i] = po[i] > T(0) ? pg[i] : T(0);
      }
    });
    return {gx};
  });
}

Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>();
    auto po = out.mutable_data<T>();
    const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
    for (std::size_t i = 0; i < po.size(); ++i) {
      po[i] = T(0.5) * px[i] * (T(1) + std::erf(px[i] * inv_sqrt2));
    }
  });
  const Tensor xd = x.detach();
  return record(out, "gelu", {x}, [xd](const Tensor& g) -> std::vector<Tensor> {
    Tensor gx = Tensor::zeros(g.shape(), g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto pg = g.data<T>();
      auto px = xd.data<T>();
      auto po = gx.mutable_data<T>();
      const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
      const T inv_sqrt2pi = static_cast<T>(1.0 / std::sqrt(2.0 * std::numbers::pi));
      for (std::size_t i = 0; i < po.size(); ++i) {
        const T v = px[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        po[i] = pg[i] * (cdf + v * pdf);
      }
    });
    return {gx};
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const int rank = x.rank();
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError("softmax: axis out of range");
  }
  const auto& s = x.shape();
  std::int64_t outer = 1;
  std::int64_t inner = 1;
  for (int i = 0; i < a; ++i) {
    outer *= s[static_cast<std::size_t>(i)];
  }
  for (int i = a + 1; i < rank; ++i) {
    inner *= s[static_cast<std::size_t>(i)];
  }
  const std::int64_t len = s[static_cast<std::size_t>(a)];
  Tensor out = Tensor::zeros(s, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>();
    auto po = out.mutable_data<T>();
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t in = 0; in < inner; ++in) {
        const std::int64_t base = o * len * inner + in;
        T m = px[base];
        for (std::int64_t k = 1; k < len; ++k) {
          m = std::max(m, px[base + k * inner]);
        }
        T total = 0;
        for (std::int64_t k = 0; k < len; ++k) {
          const T e = std::exp(px[base + k * inner] - m);
          po[base + k * inner] = e;
          total += e;
        }
        for (std::int64_t k = 0; k < len; ++k) {
          po[base + k * inner] /= total;
        }
      }
    }
  });
  const Tensor od = out.detach();
  return record(out, "softmax", {x}, [od, outer, inner, len](const Tensor& g) -> std::vector<Tensor> {
    Tensor gx = Tensor::zeros(g.shape(), g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto pg = g.data<T>();
      auto pp = od.data<T>();
      auto px = gx.mutable_data<T>();
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
          const std::int64_t base = o * len * inner + in;
          T dot = 0;
          for (std::int64_t k = 0; k < len; ++k) {
            dot += pg[base + k * inner] * pp[base + k * inner];
          }
          for (std::int64_t k = 0; k < len; ++k) {
            const auto i = base + k * inner;
            px[i] = pp[i] * (pg[i] - dot);
          }
        }
      }
    });
    return {gx};
  });
}

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::zeros({}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T acc = 0;
    for (T v : x.data<T>()) {
      acc += v;
    }
    out.mutable_data<T>()[0] = acc;
  });
  const Shape shape = x.shape();
  return record(out, "sum", {x}, [shape](const Tensor& g) -> std::vector<Tensor> {
    return {Tensor::full(shape, g.item(), g.dtype())};
  });
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

}  // namespace swintr
