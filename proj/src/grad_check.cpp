#include "swintr/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "swintr/autograd.hpp"

namespace swintr {

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& inputs, const GradCheckOptions& options) {
  for (const auto& [name, t] : inputs) {
    if (t.dtype() != DType::f64) {
      throw ContractError("grad_check: input '" + name + "' must be f64");
    }
    if (!t.requires_grad() || !t.is_leaf()) {
      throw ContractError("grad_check: input '" + name + "' must be a leaf requiring grad");
    }
  }
  for (auto [name, t] : inputs) {
    t.zero_grad();
  }
  backward(loss_fn());

  struct Entry {
    std::size_t tensor;
    std::int64_t index;
    double analytic;
    double numeric;
  };
  std::vector<Entry> entries;
  std::mt19937_64 rng(options.seed);
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor t = inputs[ti].second;
    const auto analytic = t.has_grad() ? t.grad().to_vector() : std::vector<double>(static_cast<std::size_t>(t.numel()), 0.0);
    std::vector<std::int64_t> coords(static_cast<std::size_t>(t.numel()));
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    auto values = t.mutable_data<double>();
    for (auto idx : coords) {
      const double original = values[static_cast<std::size_t>(idx)];
      double plus = 0.0;
      double minus = 0.0;
      {
        NoGradGuard no_grad;
        values[static_cast<std::size_t>(idx)] = original + options.eps;
        plus = loss_fn().item();
        values[static_cast<std::size_t>(idx)] = original - options.eps;
        minus = loss_fn().item();
      }
      values[static_cast<std::size_t>(idx)] = original;
      entries.push_back({ti, idx, analytic[static_cast<std::size_t>(idx)], (plus - minus) / (2.0 * options.eps)});
    }
  }

  GradCheckReport report;
  double scale = 0.0;
  for (const auto& e : entries) {
    scale = std::max(scale, std::abs(e.numeric));
  }
  const double floor = std::max(1e-3 * scale, 1e-12);
  for (const auto& e : entries) {
    const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), floor});
    const double rel = std::abs(e.analytic - e.numeric) / denom;
    if (rel > report.max_rel_error || report.worst_index < 0) {
      report.max_rel_error = rel;
      report.worst_tensor = inputs[e.tensor].first;
      report.worst_index = e.index;
    }
  }
  report.coords_checked = entries.size();
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace swintr
