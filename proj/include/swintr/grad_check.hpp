#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "swintr/tensor.hpp"

namespace swintr {

struct GradCheckOptions {
  double eps = 1e-6;
  double tolerance = 1e-4;
  // 0 checks every coordinate; otherwise a seeded random subset per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::int64_t worst_index = -1;
  std::size_t coords_checked = 0;
  bool passed = false;
};

// Compares backward() gradients of loss_fn against central differences for each
// named input. Inputs must be f64 leaves with requires_grad set.
//
// The relative error of one coordinate is |a - n| / max(|a|, |n|, floor), where
// floor is 1e-3 of the largest numeric gradient magnitude seen, so coordinates
// whose true gradient is ~0 are judged against the scale of the whole check.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace swintr
