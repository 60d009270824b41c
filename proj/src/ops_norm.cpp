#include <cmath>

#include "swintr/ops.hpp"

namespace swintr {

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  const std::int64_t d = x.dim(-1);
  if (gain.numel() != d || shift.numel() != d) {
    throw DimensionError("layer_norm: gain/shift must have " + std::to_string(d) + " entries");
  }
  const std::int64_t rows = x.numel() / d;
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  Tensor xhat = Tensor::zeros(x.shape(), x.dtype());
  Tensor inv_std = Tensor::zeros({rows}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>();
    auto pg = gain.data<T>();
    auto pb = shift.data<T>();
    auto po = out.mutable_data<T>();
    auto ph = xhat.mutable_data<T>();
    auto ps = inv_std.mutable_data<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* row = px.data() + r * d;
      T m = 0;
      for (std::int64_t i = 0; i < d; ++i) {
        m += row[i];
      }
      m /= static_cast<T>(d);
      T var = 0;
      for (std::int64_t i = 0; i < d; ++i) {
        var += (row[i] - m) * (row[i] - m);
      }
      var /= static_cast<T>(d);
      const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
      ps[r] = is;
      for (std::int64_t i = 0; i < d; ++i) {
        const T h = (row[i] - m) * is;
        ph[r * d + i] = h;
        po[r * d + i] = h * pg[i] + pb[i];
      }
    }
  });
  const Tensor gd = gain.detach();
  return record(out, "layer_norm", {x, gain, shift}, [xhat, inv_std, gd, rows, d](const Tensor& g) -> std::vector<Tensor> {
    Tensor gx = Tensor::zeros(g.shape(), g.dtype());
    Tensor ggain = Tensor::zeros(gd.shape(), g.dtype());
    Tensor gshift = Tensor::zeros(gd.shape(), g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto pg = g.data<T>();
      auto ph = xhat.data<T>();
      auto ps = inv_std.data<T>();
      auto pgain = gd.data<T>();
      auto px = gx.mutable_data<T>();
      auto pgg = ggain.mutable_data<T>();
      auto pgs = gshift.mutable_data<T>();
      for (std::int64_t r = 0; r < rows; ++r) {
        T mean_dh = 0;
        T mean_dh_h = 0;
        for (std::int64_t i = 0; i < d; ++i) {
          const auto k = r * d + i;
          const T dh = pg[k] * pgain[i];
          mean_dh += dh;
          mean_dh_h += dh * ph[k];
          pgg[i] += pg[k] * ph[k];
          pgs[i] += pg[k];
        }
        mean_dh /= static_cast<T>(d);
        mean_dh_h /= static_cast<T>(d);
        for (std::int64_t i = 0; i < d; ++i) {
          const auto k = r * d + i;
          px[k] = ps[r] * (pg[k] * pgain[i] - mean_dh - ph[k] * mean_dh_h);
        }
      }
    });
    return {gx, ggain, gshift};
  });
}

Tensor batch_norm(const Tensor& x, Tensor& running_mean, Tensor& running_var, const Tensor& gain, const Tensor& shift,
                  bool training, double momentum, double eps) {
  if (x.rank() != 4) {
    throw DimensionError("batch_norm: expected NCHW input, got " + shape_str(x.shape()));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gain.numel() != c || shift.numel() != c || running_mean.numel() != c || running_var.numel() != c) {
    throw DimensionError("batch_norm: per-channel tensors must have " + std::to_string(c) + " entries");
  }
  const std::int64_t count = n * hw;
  if (training && count < 2) {
    throw DimensionError("batch_norm: training mode needs more than one value per channel");
  }
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  Tensor xhat = Tensor::zeros(x.shape(), x.dtype());
  Tensor inv_std = Tensor::zeros({c}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>();
    auto pg = gain.data<T>();
    auto pb = shift.data<T>();
    auto po = out.mutable_data<T>();
    auto ph = xhat.mutable_data<T>();
    auto ps = inv_std.mutable_data<T>();
    auto rm = running_mean.mutable_data<T>();
    auto rv = running_var.mutable_data<T>();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      T m;
      T var;
      if (training) {
        double acc = 0;
        for (std::int64_t b = 0; b < n; ++b) {
          const T* plane = px.data() + (b * c + ch) * hw;
          for (std::int64_t i = 0; i < hw; ++i) {
            acc += plane[i];
          }
        }
        m = static_cast<T>(acc / static_cast<double>(count));
        double sq = 0;
        for (std::int64_t b = 0; b < n; ++b) {
          const T* plane = px.data() + (b * c + ch) * hw;
          for (std::int64_t i = 0; i < hw; ++i) {
            const double dv = static_cast<double>(plane[i] - m);
            sq += dv * dv;
          }
        }
        var = static_cast<T>(sq / static_cast<double>(count));
        const T mom = static_cast<T>(momentum);
        rm[ch] = (T(1) - mom) * rm[ch] + mom * m;
        rv[ch] = (T(1) - mom) * rv[ch] + mom * var * static_cast<T>(count) / static_cast<T>(count - 1);
      } else {
        m = rm[ch];
        var = rv[ch];
      }
      const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
      ps[ch] = is;
      for (std::int64_t b = 0; b < n; ++b) {
        const auto base = (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const T h = (px[base + i] - m) * is;
          ph[base + i] = h;
          po[base + i] = h * pg[ch] + pb[ch];
        }
      }
    }
  });
  const Tensor gd = gain.detach();
  return record(out, "batch_norm", {x, gain, shift},
                [xhat, inv_std, gd, training, n, c, hw, count](const Tensor& g) -> std::vector<Tensor> {
                  Tensor gx = Tensor::zeros(g.shape(), g.dtype());
                  Tensor ggain = Tensor::zeros({c}, g.dtype());
                  Tensor gshift = Tensor::zeros({c}, g.dtype());
                  dispatch(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    auto pg = g.data<T>();
                    auto ph = xhat.data<T>();
                    auto ps = inv_std.data<T>();
                    auto pgain = gd.data<T>();
                    auto px = gx.mutable_data<T>();
                    auto pgg = ggain.mutable_data<T>();
                    auto pgs = gshift.mutable_data<T>();
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                      double sum_g = 0;
                      double sum_gh = 0;
                      for (std::int64_t b = 0; b < n; ++b) {
                        const auto base = (b * c + ch) * hw;
                        for (std::int64_t i = 0; i < hw; ++i) {
                          sum_g += pg[base + i];
                          sum_gh += pg[base + i] * ph[base + i];
                        }
                      }
                      pgg[ch] = static_cast<T>(sum_gh);
                      pgs[ch] = static_cast<T>(sum_g);
                      const T scale = pgain[ch] * ps[ch];
                      const T mean_g = static_cast<T>(sum_g / static_cast<double>(count));
                      const T mean_gh = static_cast<T>(sum_gh / static_cast<double>(count));
                      for (std::int64_t b = 0; b < n; ++b) {
                        const auto base = (b * c + ch) * hw;
                        for (std::int64_t i = 0; i < hw; ++i) {
                          const auto k = base + i;
                          px[k] = training ? scale * (pg[k] - mean_g - ph[k] * mean_gh) : scale * pg[k];
                        }
                      }
                    }
                  });
                  return {gx, ggain, gshift};
                });
}

}  // namespace swintr
