#include <algorithm>
#include <atomic>
#include <cmath>

#include "gemm.hpp"
#include "swintr/ops.hpp"

namespace swintr {

namespace {

std::atomic<double> g_conv_backward_perturbation{0.0};

struct ConvGeometry {
  std::int64_t batch, cin, h, w, cout, kh, kw, ho, wo;
  int stride, padding;
  std::int64_t col_rows() const { return cin * kh * kw; }
  std::int64_t col_cols() const { return ho * wo; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && padding == 0; }
};

template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        const T* plane = img + c * g.h * g.w;
        for (std::int64_t oh = 0; oh < g.ho; ++oh) {
          const std::int64_t ih = oh * g.stride - g.padding + ki;
          T* dst = row + oh * g.wo;
          if (ih < 0 || ih >= g.h) {
            std::fill_n(dst, g.wo, T(0));
            continue;
          }
          const T* src = plane + ih * g.w;
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            const std::int64_t iw = ow * g.stride - g.padding + kj;
            dst[ow] = (iw >= 0 && iw < g.w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* img) {
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        T* plane = img + c * g.h * g.w;
        for (std::int64_t oh = 0; oh < g.ho; ++oh) {
          const std::int64_t ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= g.h) {
            continue;
          }
          const T* src = row + oh * g.wo;
          T* dst = plane + ih * g.w;
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            const std::int64_t iw = ow * g.stride - g.padding + kj;
            if (iw >= 0 && iw < g.w) {
              dst[iw] += src[ow];
            }
          }
        }
      }
    }
  }
}

ConvGeometry conv_geometry(const Tensor& input, const Tensor& weight, int stride, int padding) {
  if (input.rank() != 4 || weight.rank() != 4) {
    throw DimensionError("conv2d: expected NCHW input and [Cout,Cin,kh,kw] weight, got " + shape_str(input.shape()) +
                         " and " + shape_str(weight.shape()));
  }
  if (input.dim(1) != weight.dim(1)) {
    throw DimensionError("conv2d: input has " + std::to_string(input.dim(1)) + " channels but weight expects " +
                         std::to_string(weight.dim(1)));
  }
  if (weight.dim(2) % 2 == 0 || weight.dim(3) % 2 == 0) {
    throw DimensionError("conv2d: kernel extents must be odd, got " + shape_str(weight.shape()));
  }
  if (stride < 1 || padding < 0) {
    throw DimensionError("conv2d: stride must be >= 1 and padding >= 0");
  }
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0), weight.dim(2),
                 weight.dim(3), 0, 0, stride, padding};
  if (g.h + 2 * padding < g.kh || g.w + 2 * padding < g.kw) {
    throw DimensionError("conv2d: padded input smaller than kernel");
  }
  g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wo = (g.w + 2 * padding - g.kw) / stride + 1;
  return g;
}

// out[b, c, h*r+i, w*r+j] = in[b, c*r*r + i*r + j, h, w]
Tensor shuffle_raw(const Tensor& x, int r) {
  const std::int64_t b = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t c = cin / (r * r);
  Tensor out = Tensor::zeros({b, c, h * r, w * r}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>();
    auto po = out.mutable_data<T>();
    for (std::int64_t n = 0; n < b; ++n) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        T* dst = po.data() + (n * c + ch) * h * r * w * r;
        for (std::int64_t i = 0; i < r; ++i) {
          for (std::int64_t j = 0; j < r; ++j) {
            const T* src = px.data() + (n * cin + ch * r * r + i * r + j) * h * w;
            for (std::int64_t y = 0; y < h; ++y) {
              T* drow = dst + (y * r + i) * w * r + j;
              const T* srow = src + y * w;
              for (std::int64_t xq = 0; xq < w; ++xq) {
                drow[xq * r] = srow[xq];
              }
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor unshuffle_raw(const Tensor& x, int r) {
  const std::int64_t b = x.dim(0), c = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t h = H / r, w = W / r;
  Tensor out = Tensor::zeros({b, c * r * r, h, w}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>();
    auto po = out.mutable_data<T>();
    for (std::int64_t n = 0; n < b; ++n) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T* src = px.data() + (n * c + ch) * H * W;
        for (std::int64_t i = 0; i < r; ++i) {
          for (std::int64_t j = 0; j < r; ++j) {
            T* dst = po.data() + (n * c * r * r + ch * r * r + i * r + j) * h * w;
            for (std::int64_t y = 0; y < h; ++y) {
              const T* srow = src + (y * r + i) * W + j;
              T* drow = dst + y * w;
              for (std::int64_t xq = 0; xq < w; ++xq) {
                drow[xq] = srow[xq * r];
              }
            }
          }
        }
      }
    }
  });
  return out;
}

void check_shuffle_input(const Tensor& x, int r, const char* op) {
  if (x.rank() != 4) {
    throw DimensionError(std::string(op) + ": expected NCHW input, got " + shape_str(x.shape()));
  }
  if (r < 1) {
    throw DimensionError(std::string(op) + ": factor must be >= 1");
  }
}

// Two-tap linear interpolation table for one axis.
struct AxisTaps {
  std::vector<std::int64_t> lo, hi;
  std::vector<double> frac;
};

AxisTaps axis_taps(std::int64_t in, std::int64_t out) {
  AxisTaps t;
  t.lo.resize(static_cast<std::size_t>(out));
  t.hi.resize(static_cast<std::size_t>(out));
  t.frac.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t i = 0; i < out; ++i) {
    const double src = std::max(0.0, (static_cast<double>(i) + 0.5) * scale - 0.5);
    auto lo = static_cast<std::int64_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    const auto k = static_cast<std::size_t>(i);
    t.lo[k] = lo;
    t.hi[k] = std::min(lo + 1, in - 1);
    t.frac[k] = src - static_cast<double>(lo);
  }
  return t;
}

Tensor bilinear_raw(const Tensor& x, std::int64_t oh, std::int64_t ow) {
  const std::int64_t ih = x.dim(-2), iw = x.dim(-1);
  const std::int64_t planes = x.numel() / (ih * iw);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = oh;
  out_shape[out_shape.size() - 1] = ow;
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  const AxisTaps ty = axis_taps(ih, oh);
  const AxisTaps tx = axis_taps(iw, ow);
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>();
    auto po = out.mutable_data<T>();
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* src = px.data() + p * ih * iw;
      T* dst = po.data() + p * oh * ow;
      for (std::int64_t y = 0; y < oh; ++y) {
        const auto ky = static_cast<std::size_t>(y);
        const T fy = static_cast<T>(ty.frac[ky]);
        const T* r0 = src + ty.lo[ky] * iw;
        const T* r1 = src + ty.hi[ky] * iw;
        for (std::int64_t xq = 0; xq < ow; ++xq) {
          const auto kx = static_cast<std::size_t>(xq);
          const T fx = static_cast<T>(tx.frac[kx]);
          const auto x0 = tx.lo[kx];
          const auto x1 = tx.hi[kx];
          const T top = r0[x0] + fx * (r0[x1] - r0[x0]);
          const T bottom = r1[x0] + fx * (r1[x1] - r1[x0]);
          dst[y * ow + xq] = top + fy * (bottom - top);
        }
      }
    }
  });
  return out;
}

Tensor bilinear_backward(const Tensor& g, const Shape& in_shape) {
  const std::int64_t ih = in_shape[in_shape.size() - 2], iw = in_shape.back();
  const std::int64_t oh = g.dim(-2), ow = g.dim(-1);
  const std::int64_t planes = g.numel() / (oh * ow);
  Tensor gx = Tensor::zeros(in_shape, g.dtype());
  const AxisTaps ty = axis_taps(ih, oh);
  const AxisTaps tx = axis_taps(iw, ow);
  dispatch(g.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto pg = g.data<T>();
    auto px = gx.mutable_data<T>();
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* src = pg.data() + p * oh * ow;
      T* dst = px.data() + p * ih * iw;
      for (std::int64_t y = 0; y < oh; ++y) {
        const auto ky = static_cast<std::size_t>(y);
        const T fy = static_cast<T>(ty.frac[ky]);
        T* r0 = dst + ty.lo[ky] * iw;
        T* r1 = dst + ty.hi[ky] * iw;
        for (std::int64_t xq = 0; xq < ow; ++xq) {
          const auto kx = static_cast<std::size_t>(xq);
          const T fx = static_cast<T>(tx.frac[kx]);
          const T v = src[y * ow + xq];
          r0[tx.lo[kx]] += v * (T(1) - fy) * (T(1) - fx);
          r0[tx.hi[kx]] += v * (T(1) - fy) * fx;
          r1[tx.lo[kx]] += v * fy * (T(1) - fx);
          r1[tx.hi[kx]] += v * fy * fx;
        }
      }
    }
  });
  return gx;
}

}  // namespace

namespace testing {
void set_conv_backward_perturbation(double delta) { g_conv_backward_perturbation = delta; }
}  // namespace testing

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  const ConvGeometry g = conv_geometry(input, weight, stride, padding);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias must be [Cout]");
  }
  if (input.dtype() != weight.dtype()) {
    throw ContractError("conv2d: dtype mismatch");
  }
  Tensor out = Tensor::zeros({g.batch, g.cout, g.ho, g.wo}, input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = input.data<T>();
    auto pw = weight.data<T>();
    auto po = out.mutable_data<T>();
    Storage<T> col(g.is_pointwise() ? 0 : static_cast<std::size_t>(g.col_rows() * g.col_cols()));
    for (std::int64_t b = 0; b < g.batch; ++b) {
      const T* img = px.data() + b * g.cin * g.h * g.w;
      const T* cols = img;
      if (!g.is_pointwise()) {
        im2col(img, g, col.data());
        cols = col.data();
      }
      T* dst = po.data() + b * g.cout * g.col_cols();
      detail::gemm<T>(false, false, g.cout, g.col_cols(), g.col_rows(), T(1), pw.data(), cols, T(0), dst);
      if (bias.defined()) {
        auto pb = bias.data<T>();
        for (std::int64_t c = 0; c < g.cout; ++c) {
          T* plane = dst + c * g.col_cols();
          for (std::int64_t i = 0; i < g.col_cols(); ++i) {
            plane[i] += pb[c];
          }
        }
      }
    }
  });
  const Tensor xd = input.detach();
  const Tensor wd = weight.detach();
  const bool has_bias = bias.defined();
  const bool need_x = input.requires_grad();
  return record(out, "conv2d", {input, weight, bias}, [xd, wd, g, has_bias, need_x](const Tensor& gout) -> std::vector<Tensor> {
    Tensor gx;
    Tensor gw = Tensor::zeros(wd.shape(), gout.dtype());
    Tensor gb;
    dispatch(gout.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto pg = gout.data<T>();
      auto px = xd.data<T>();
      auto pw = wd.data<T>();
      auto pgw = gw.mutable_data<T>();
      T* pgx = nullptr;
      if (need_x) {
        gx = Tensor::zeros(xd.shape(), gout.dtype());
        pgx = gx.mutable_data<T>().data();
      }
      const auto col_size = static_cast<std::size_t>(g.col_rows() * g.col_cols());
      Storage<T> col(g.is_pointwise() ? 0 : col_size);
      Storage<T> dcol(need_x && !g.is_pointwise() ? col_size : 0);
      for (std::int64_t b = 0; b < g.batch; ++b) {
        const T* img = px.data() + b * g.cin * g.h * g.w;
        const T* dy = pg.data() + b * g.cout * g.col_cols();
        const T* cols = img;
        if (!g.is_pointwise()) {
          im2col(img, g, col.data());
          cols = col.data();
        }
        detail::gemm<T>(false, true, g.cout, g.col_rows(), g.col_cols(), T(1), dy, cols, T(1), pgw.data());
        if (need_x) {
          T* dimg = pgx + b * g.cin * g.h * g.w;
          if (g.is_pointwise()) {
            detail::gemm<T>(true, false, g.col_rows(), g.col_cols(), g.cout, T(1), pw.data(), dy, T(0), dimg);
          } else {
            detail::gemm<T>(true, false, g.col_rows(), g.col_cols(), g.cout, T(1), pw.data(), dy, T(0), dcol.data());
            col2im(dcol.data(), g, dimg);
          }
        }
      }
      const double delta = g_conv_backward_perturbation.load();
      if (delta != 0.0) {
        for (auto& v : pgw) {
          v += static_cast<T>(delta);
        }
      }
      if (has_bias) {
        gb = Tensor::zeros({g.cout}, gout.dtype());
        auto pb = gb.mutable_data<T>();
        for (std::int64_t b = 0; b < g.batch; ++b) {
          for (std::int64_t c = 0; c < g.cout; ++c) {
            const T* plane = pg.data() + (b * g.cout + c) * g.col_cols();
            T acc = 0;
            for (std::int64_t i = 0; i < g.col_cols(); ++i) {
              acc += plane[i];
            }
            pb[c] += acc;
          }
        }
      }
    });
    return {gx, gw, gb};
  });
}

Tensor pixel_shuffle(const Tensor& input, int factor) {
  check_shuffle_input(input, factor, "pixel_shuffle");
  if (input.dim(1) % (factor * factor) != 0) {
    throw DimensionError("pixel_shuffle: " + std::to_string(input.dim(1)) + " channels not divisible by " +
                         std::to_string(factor * factor));
  }
  return record(shuffle_raw(input, factor), "pixel_shuffle", {input},
                [factor](const Tensor& g) -> std::vector<Tensor> { return {unshuffle_raw(g, factor)}; });
}

Tensor pixel_unshuffle(const Tensor& input, int factor) {
  check_shuffle_input(input, factor, "pixel_unshuffle");
  if (input.dim(2) % factor != 0 || input.dim(3) % factor != 0) {
    throw DimensionError("pixel_unshuffle: spatial extents " + shape_str(input.shape()) + " not divisible by " +
                         std::to_string(factor));
  }
  return record(unshuffle_raw(input, factor), "pixel_unshuffle", {input},
                [factor](const Tensor& g) -> std::vector<Tensor> { return {shuffle_raw(g, factor)}; });
}

Tensor bilinear_resize(const Tensor& input, std::int64_t out_h, std::int64_t out_w) {
  if (input.rank() < 2) {
    throw DimensionError("bilinear_resize: input needs two spatial axes");
  }
  if (out_h < 1 || out_w < 1) {
    throw DimensionError("bilinear_resize: output extents must be >= 1");
  }
  if (out_h == input.dim(-2) && out_w == input.dim(-1)) {
    // Identical extents sample exactly at source centers.
    return record(input.detach().clone(), "bilinear_resize", {input},
                  [](const Tensor& g) -> std::vector<Tensor> { return {g}; });
  }
  const Shape in_shape = input.shape();
  return record(bilinear_raw(input, out_h, out_w), "bilinear_resize", {input},
                [in_shape](const Tensor& g) -> std::vector<Tensor> { return {bilinear_backward(g, in_shape)}; });
}

}  // namespace swintr
