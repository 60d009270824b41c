#pragma once

#include <cstdint>
#include <vector>

#include "swintr/autograd.hpp"
#include "swintr/tensor.hpp"

namespace swintr {

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Elementwise with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& x, double s);

Tensor relu(const Tensor& x);
// Exact (erf) formulation.
Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);

// Reductions to a rank-0 scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Shape manipulation. reshape aliases storage; the others copy.
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& order);
// out[i] = x[i - shift] cyclically along each listed axis.
Tensor roll(const Tensor& x, const std::vector<std::int64_t>& shifts, const std::vector<int>& axes);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor narrow(const Tensor& x, int axis, std::int64_t start, std::int64_t length);
// Row lookup: table [R, C], out [indices.size(), C].
Tensor gather_rows(const Tensor& table, const std::vector<std::int64_t>& indices);

// Batched matrix product over identical leading dims.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);
// x [..., in] * weight[out, in]^T + bias[out]. bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Cross-correlation over NCHW input, weight [Cout, Cin, kh, kw] with odd kernel extents.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1, int padding = 0);
Tensor pixel_shuffle(const Tensor& input, int factor);
Tensor pixel_unshuffle(const Tensor& input, int factor);
// Half-pixel-center bilinear resampling of the two trailing axes.
Tensor bilinear_resize(const Tensor& input, std::int64_t out_h, std::int64_t out_w);

// Normalizes over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps = kNormEpsilon);
// Normalizes NCHW per channel. In training mode batch statistics are used and the
// running statistics are updated in place; otherwise the running statistics are used.
Tensor batch_norm(const Tensor& x, Tensor& running_mean, Tensor& running_var, const Tensor& gain,
                  const Tensor& shift, bool training, double momentum = kBatchNormMomentum,
                  double eps = kNormEpsilon);

namespace testing {
// Adds `delta` to every weight-gradient entry produced by conv2d backward.
// Exists so self-checks can prove that a broken backward rule is caught.
void set_conv_backward_perturbation(double delta);
}  // namespace testing

}  // namespace swintr
