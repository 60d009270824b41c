#include <algorithm>
#include <numeric>

#include "swintr/ops.hpp"

namespace swintr {

namespace {

int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return a;
}

std::vector<std::int64_t> contiguous_strides(const Shape& shape) {
  std::vector<std::int64_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

Tensor permute_raw(const Tensor& x, const std::vector<int>& order) {
  const auto& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  Shape out_shape(rank);
  const auto in_strides = contiguous_strides(in_shape);
  std::vector<std::int64_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[static_cast<std::size_t>(order[i])];
    src_strides[i] = in_strides[static_cast<std::size_t>(order[i])];
  }
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>();
    auto po = out.mutable_data<T>();
    if (rank == 0) {
      po[0] = px[0];
      return;
    }
    const std::int64_t inner = out_shape[rank - 1];
    const std::int64_t step = src_strides[rank - 1];
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t src = 0;
    const auto total = static_cast<std::int64_t>(po.size());
    for (std::int64_t base = 0; base < total; base += inner) {
      if (step == 1) {
        std::copy_n(px.data() + src, inner, po.data() + base);
      } else {
        for (std::int64_t j = 0; j < inner; ++j) {
          po[base + j] = px[src + j * step];
        }
      }
      for (std::size_t d = rank - 1; d-- > 0;) {
        ++idx[d];
        src += src_strides[d];
        if (idx[d] < out_shape[d]) {
          break;
        }
        src -= src_strides[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  });
  return out;
}

Tensor roll_raw(const Tensor& x, const std::vector<std::int64_t>& shifts, const std::vector<int>& axes) {
  const auto& shape = x.shape();
  const auto strides = contiguous_strides(shape);
  Tensor out = Tensor::zeros(shape, x.dtype());
  std::vector<std::int64_t> shift_per_axis(shape.size(), 0);
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const auto a = static_cast<std::size_t>(normalize_axis(axes[i], x.rank(), "roll"));
    const auto n = shape[a];
    shift_per_axis[a] = ((shifts[i] % n) + n) % n;
  }
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>();
    auto po = out.mutable_data<T>();
    const auto total = static_cast<std::int64_t>(po.size());
    std::vector<std::int64_t> idx(shape.size(), 0);
    for (std::int64_t i = 0; i < total; ++i) {
      std::int64_t dst = 0;
      for (std::size_t d = 0; d < shape.size(); ++d) {
        dst += ((idx[d] + shift_per_axis[d]) % shape[d]) * strides[d];
      }
      po[dst] = px[i];
      for (std::size_t d = shape.size(); d-- > 0;) {
        if (++idx[d] < shape[d]) {
          break;
        }
        idx[d] = 0;
      }
    }
  });
  return out;
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) {
        throw DimensionError("reshape: more than one inferred extent");
      }
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) {
    shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  }
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->dtype = x.dtype();
  impl->data = x.impl()->data;
  const Shape original = x.shape();
  return record(Tensor(std::move(impl)), "reshape", {x},
                [original](const Tensor& g) -> std::vector<Tensor> { return {reshape(g, original)}; });
}

Tensor permute(const Tensor& x, const std::vector<int>& order) {
  if (static_cast<int>(order.size()) != x.rank()) {
    throw DimensionError("permute: order length does not match rank");
  }
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < x.rank(); ++i) {
    if (sorted[static_cast<std::size_t>(i)] != i) {
      throw DimensionError("permute: order is not a permutation");
    }
  }
  std::vector<int> inverse(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    inverse[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
  }
  return record(permute_raw(x, order), "permute", {x},
                [inverse](const Tensor& g) -> std::vector<Tensor> { return {permute_raw(g, inverse)}; });
}

Tensor roll(const Tensor& x, const std::vector<std::int64_t>& shifts, const std::vector<int>& axes) {
  if (shifts.size() != axes.size()) {
    throw DimensionError("roll: shifts and axes differ in length");
  }
  std::vector<std::int64_t> back(shifts.size());
  std::transform(shifts.begin(), shifts.end(), back.begin(), [](std::int64_t s) { return -s; });
  return record(roll_raw(x, shifts, axes), "roll", {x},
                [back, axes](const Tensor& g) -> std::vector<Tensor> { return {roll_raw(g, back, axes)}; });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) {
    throw DimensionError("concat: no inputs");
  }
  const int rank = parts[0].rank();
  const auto a = static_cast<std::size_t>(normalize_axis(axis, rank, "concat"));
  Shape out_shape = parts[0].shape();
  out_shape[a] = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank || p.dtype() != parts[0].dtype()) {
      throw DimensionError("concat: rank or dtype mismatch");
    }
    for (std::size_t d = 0; d < static_cast<std::size_t>(rank); ++d) {
      if (d != a && p.shape()[d] != parts[0].shape()[d]) {
        throw DimensionError("concat: extent mismatch " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
      }
    }
    out_shape[a] += p.shape()[a];
  }
  std::int64_t outer = 1;
  std::int64_t inner = 1;
  for (std::size_t d = 0; d < a; ++d) {
    outer *= out_shape[d];
  }
  for (std::size_t d = a + 1; d < out_shape.size(); ++d) {
    inner *= out_shape[d];
  }
  Tensor out = Tensor::zeros(out_shape, parts[0].dtype());
  std::vector<std::int64_t> extents;
  dispatch(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto po = out.mutable_data<T>();
    const std::int64_t out_block = out_shape[a] * inner;
    std::int64_t offset = 0;
    for (const auto& p : parts) {
      auto pp = p.data<T>();
      const std::int64_t block = p.shape()[a] * inner;
      for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(pp.data() + o * block, block, po.data() + o * out_block + offset);
      }
      offset += block;
      extents.push_back(p.shape()[a]);
    }
  });
  const int ax = static_cast<int>(a);
  return record(out, "concat", parts, [extents, ax](const Tensor& g) -> std::vector<Tensor> {
    std::vector<Tensor> grads;
    std::int64_t start = 0;
    for (auto e : extents) {
      grads.push_back(narrow(g, ax, start, e));
      start += e;
    }
    return grads;
  });
}

Tensor narrow(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
  const auto a = static_cast<std::size_t>(normalize_axis(axis, x.rank(), "narrow"));
  const auto& shape = x.shape();
  if (start < 0 || length <= 0 || start + length > shape[a]) {
    throw DimensionError("narrow: range out of bounds");
  }
  std::int64_t outer = 1;
  std::int64_t inner = 1;
  for (std::size_t d = 0; d < a; ++d) {
    outer *= shape[d];
  }
  for (std::size_t d = a + 1; d < shape.size(); ++d) {
    inner *= shape[d];
  }
  Shape out_shape = shape;
  out_shape[a] = length;
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>();
    auto po = out.mutable_data<T>();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(px.data() + (o * shape[a] + start) * inner, length * inner, po.data() + o * length * inner);
    }
  });
  return record(out, "narrow", {x}, [shape, a, start, length, outer, inner](const Tensor& g) -> std::vector<Tensor> {
    Tensor gx = Tensor::zeros(shape, g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto pg = g.data<T>();
      auto px = gx.mutable_data<T>();
      for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(pg.data() + o * length * inner, length * inner, px.data() + (o * shape[a] + start) * inner);
      }
    });
    return {gx};
  });
}

Tensor gather_rows(const Tensor& table, const std::vector<std::int64_t>& indices) {
  if (table.rank() != 2) {
    throw DimensionError("gather_rows: table must be rank 2");
  }
  const std::int64_t rows = table.dim(0);
  const std::int64_t cols = table.dim(1);
  for (auto i : indices) {
    if (i < 0 || i >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(i) + " out of range");
    }
  }
  Tensor out = Tensor::zeros({static_cast<std::int64_t>(indices.size()), cols}, table.dtype());
  dispatch(table.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto pt = table.data<T>();
    auto po = out.mutable_data<T>();
    for (std::size_t r = 0; r < indices.size(); ++r) {
      std::copy_n(pt.data() + indices[r] * cols, cols, po.data() + static_cast<std::int64_t>(r) * cols);
    }
  });
  const Shape tshape = table.shape();
  return record(out, "gather_rows", {table}, [tshape, indices, cols](const Tensor& g) -> std::vector<Tensor> {
    Tensor gt = Tensor::zeros(tshape, g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto pg = g.data<T>();
      auto pt = gt.mutable_data<T>();
      for (std::size_t r = 0; r < indices.size(); ++r) {
        for (std::int64_t c = 0; c < cols; ++c) {
          pt[indices[r] * cols + c] += pg[static_cast<std::int64_t>(r) * cols + c];
        }
      }
    });
    return {gt};
  });
}

}  // namespace swintr
