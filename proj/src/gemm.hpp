#pragma once

#include <Eigen/Core>

namespace swintr::detail {

// Row-major C[m,n] = alpha * op(A) * op(B) + beta * C, op = optional transpose.
// A is [m,k] (or [k,m] when transposed), B is [k,n] (or [n,k]).
template <typename T>
void gemm(bool trans_a, bool trans_b, long m, long n, long k, T alpha, const T* a, const T* b, T beta, T* c) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  Eigen::Map<Mat> cm(c, m, n);
  if (beta == T(0)) {
    cm.setZero();
  } else if (beta != T(1)) {
    cm *= beta;
  }
  if (m == 0 || n == 0 || k == 0) {
    return;
  }
  if (!trans_a && !trans_b) {
    cm.noalias() += alpha * (CMap(a, m, k) * CMap(b, k, n));
  } else if (!trans_a && trans_b) {
    cm.noalias() += alpha * (CMap(a, m, k) * CMap(b, n, k).transpose());
  } else if (trans_a && !trans_b) {
    cm.noalias() += alpha * (CMap(a, k, m).transpose() * CMap(b, k, n));
  } else {
    cm.noalias() += alpha * (CMap(a, k, m).transpose() * CMap(b, n, k).transpose());
  }
}

}  // namespace swintr::detail
