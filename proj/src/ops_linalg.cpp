#include "gemm.hpp"
#include "swintr/ops.hpp"

namespace swintr {

namespace {

struct MatmulPlan {
  Shape batch;
  std::int64_t batch_count = 1;
  std::int64_t m = 0, n = 0, k = 0;
};

MatmulPlan plan_matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank()) {
    throw DimensionError("matmul: operands must share rank >= 2, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  if (a.dtype() != b.dtype()) {
    throw ContractError("matmul: dtype mismatch");
  }
  MatmulPlan p;
  const int r = a.rank();
  for (int i = 0; i < r - 2; ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw DimensionError("matmul: batch extents differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    p.batch.push_back(a.dim(i));
    p.batch_count *= a.dim(i);
  }
  p.m = ta ? a.dim(-1) : a.dim(-2);
  const std::int64_t ka = ta ? a.dim(-2) : a.dim(-1);
  p.k = tb ? b.dim(-1) : b.dim(-2);
  p.n = tb ? b.dim(-2) : b.dim(-1);
  if (ka != p.k) {
    throw DimensionError("matmul: inner extents differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  return p;
}

Tensor matmul_raw(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  const MatmulPlan p = plan_matmul(a, b, ta, tb);
  Shape out_shape = p.batch;
  out_shape.push_back(p.m);
  out_shape.push_back(p.n);
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto pa = a.data<T>();
    auto pb = b.data<T>();
    auto po = out.mutable_data<T>();
    for (std::int64_t i = 0; i < p.batch_count; ++i) {
      detail::gemm<T>(ta, tb, p.m, p.n, p.k, T(1), pa.data() + i * p.m * p.k, pb.data() + i * p.k * p.n, T(0),
                      po.data() + i * p.m * p.n);
    }
  });
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  Tensor out = matmul_raw(a, b, transpose_a, transpose_b);
  const Tensor ad = a.detach();
  const Tensor bd = b.detach();
  const bool ta = transpose_a;
  const bool tb = transpose_b;
  return record(out, "matmul", {a, b}, [ad, bd, ta, tb](const Tensor& g) -> std::vector<Tensor> {
    Tensor ga;
    Tensor gb;
    if (!ta && !tb) {
      ga = matmul_raw(g, bd, false, true);
      gb = matmul_raw(ad, g, true, false);
    } else if (!ta && tb) {
      ga = matmul_raw(g, bd, false, false);
      gb = matmul_raw(g, ad, true, false);
    } else if (ta && !tb) {
      ga = matmul_raw(bd, g, false, true);
      gb = matmul_raw(ad, g, false, false);
    } else {
      ga = matmul_raw(bd, g, true, true);
      gb = matmul_raw(g, ad, true, true);
    }
    return {ga, gb};
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.dim(-1) != weight.dim(1)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw DimensionError("linear: bias shape " + shape_str(bias.shape()));
  }
  const std::int64_t in = weight.dim(1);
  const std::int64_t outc = weight.dim(0);
  const std::int64_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outc;
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto po = out.mutable_data<T>();
    detail::gemm<T>(false, true, rows, outc, in, T(1), x.data<T>().data(), weight.data<T>().data(), T(0), po.data());
    if (bias.defined()) {
      auto pb = bias.data<T>();
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < outc; ++c) {
          po[r * outc + c] += pb[c];
        }
      }
    }
  });
  const Tensor xd = x.detach();
  const Tensor wd = weight.detach();
  const bool has_bias = bias.defined();
  const bool need_x = x.requires_grad();
  return record(out, "linear", {x, weight, bias},
                [xd, wd, has_bias, need_x, rows, in, outc](const Tensor& g) -> std::vector<Tensor> {
                  Tensor gx;
                  Tensor gw = Tensor::zeros(wd.shape(), g.dtype());
                  Tensor gb;
                  dispatch(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    auto pg = g.data<T>();
                    if (need_x) {
                      gx = Tensor::zeros(xd.shape(), g.dtype());
                      detail::gemm<T>(false, false, rows, in, outc, T(1), pg.data(), wd.data<T>().data(), T(0),
                                      gx.mutable_data<T>().data());
                    }
                    detail::gemm<T>(true, false, outc, in, rows, T(1), pg.data(), xd.data<T>().data(), T(0),
                                    gw.mutable_data<T>().data());
                    if (has_bias) {
                      gb = Tensor::zeros({outc}, g.dtype());
                      auto pb = gb.mutable_data<T>();
                      for (std::int64_t r = 0; r < rows; ++r) {
                        for (std::int64_t c = 0; c < outc; ++c) {
                          pb[c] += pg[r * outc + c];
                        }
                      }
                    }
                  });
                  return {gx, gw, gb};
                });
}

}  // namespace swintr
