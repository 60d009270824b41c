#include "swintr/selftest.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

#include "swintr/autograd.hpp"
#include "swintr/grad_check.hpp"
#include "swintr/metrics.hpp"
#include "swintr/model.hpp"
#include "swintr/training.hpp"

namespace swintr {

namespace {

using Inputs = std::vector<std::pair<std::string, Tensor>>;

Tensor leaf(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::uniform(std::move(shape), rng, lo, hi, DType::f64).set_requires_grad(true);
}

// Projects an op output onto fixed random weights so every output entry
// contributes to the scalar being differentiated.
std::function<Tensor()> probe(std::function<Tensor()> op, std::mt19937_64& rng) {
  Tensor probe_weights;
  return [op = std::move(op), probe_weights, seed = rng()]() mutable {
    Tensor out = op();
    if (!probe_weights.defined()) {
      std::mt19937_64 r(seed);
      probe_weights = Tensor::uniform(out.shape(), r, -1.0, 1.0, DType::f64);
    }
    return sum(mul(out, probe_weights));
  };
}

SelfCheck grad_case(const std::string& name, const std::function<Tensor()>& loss, const Inputs& inputs,
                    double tolerance) {
  GradCheckOptions opt;
  opt.tolerance = tolerance;
  opt.max_coords_per_tensor = 48;
  const GradCheckReport r = grad_check(loss, inputs, opt);
  char buf[160];
  std::snprintf(buf, sizeof buf, "max rel error %.3g (%s[%lld])", r.max_rel_error, r.worst_tensor.c_str(),
                static_cast<long long>(r.worst_index));
  return {"grad " + name, r.passed, buf};
}

std::vector<SelfCheck> gradient_checks() {
  std::vector<SelfCheck> out;
  std::mt19937_64 rng(17);
  {
    Tensor x = leaf({2, 3, 5, 5}, rng), w = leaf({4, 3, 3, 3}, rng), b = leaf({4}, rng);
    out.push_back(grad_case("conv2d", probe([=] { return conv2d(x, w, b, 1, 1); }, rng),
                            {{"x", x}, {"w", w}, {"b", b}}, 1e-4));
  }
  {
    Tensor x = leaf({2, 4, 3}, rng), w = leaf({5, 3}, rng), b = leaf({5}, rng);
    out.push_back(grad_case("linear", probe([=] { return linear(x, w, b); }, rng), {{"x", x}, {"w", w}, {"b", b}},
                            1e-4));
  }
  {
    Tensor a = leaf({2, 3, 4}, rng), b = leaf({2, 5, 4}, rng);
    out.push_back(grad_case("matmul", probe([=] { return matmul(a, b, false, true); }, rng), {{"a", a}, {"b", b}},
                            1e-4));
  }
  {
    Tensor x = leaf({2, 3, 7}, rng, -3, 3);
    out.push_back(grad_case("softmax", probe([=] { return softmax(x, -1); }, rng), {{"x", x}}, 1e-4));
    out.push_back(grad_case("gelu", probe([=] { return gelu(x); }, rng), {{"x", x}}, 1e-4));
  }
  {
    Tensor x = leaf({3, 6}, rng), g = leaf({6}, rng), s = leaf({6}, rng);
    out.push_back(grad_case("layer_norm", probe([=] { return layer_norm(x, g, s); }, rng),
                            {{"x", x}, {"gain", g}, {"shift", s}}, 1e-4));
  }
  {
    Tensor x = leaf({3, 2, 4, 4}, rng), g = leaf({2}, rng), s = leaf({2}, rng);
    Tensor rm = Tensor::zeros({2}, DType::f64), rv = Tensor::ones({2}, DType::f64);
    out.push_back(grad_case("batch_norm", probe([=]() mutable { return batch_norm(x, rm, rv, g, s, true); }, rng),
                            {{"x", x}, {"gain", g}, {"shift", s}}, 1e-4));
  }
  {
    Tensor x = leaf({1, 8, 3, 3}, rng);
    out.push_back(grad_case("pixel_shuffle", probe([=] { return pixel_shuffle(x, 2); }, rng), {{"x", x}}, 1e-4));
    Tensor y = leaf({1, 2, 4, 6}, rng);
    out.push_back(grad_case("pixel_unshuffle", probe([=] { return pixel_unshuffle(y, 2); }, rng), {{"x", y}}, 1e-4));
    out.push_back(grad_case("bilinear_resize", probe([=] { return bilinear_resize(y, 7, 3); }, rng), {{"x", y}}, 1e-4));
  }
  {
    Tensor s = leaf({2, 3, 3, 3}, rng, -2, 2);
    LabelMap t(2, 3, 3);
    std::uniform_int_distribution<int> c(0, 2);
    for (auto& v : t.values) v = static_cast<std::uint8_t>(c(rng));
    t.values[4] = kIgnoreLabel;
    out.push_back(grad_case("focal_loss", [=] { return focal_loss(s, t); }, {{"scores", s}}, 1e-4));
  }
  {
    ModuleInit init(5, DType::f64);
    ResizerShape shape{8, 2};
    auto down = std::make_shared<LapDCN>(init, 2, 3, shape);
    std::mt19937_64 prng(9);
    for (auto& [name, p] : down->named_parameters()) {
      p.copy_from(Tensor::uniform(p.shape(), prng, -0.5, 0.5, DType::f64));
    }
    Tensor x = leaf({2, 3, 8, 8}, rng);
    Inputs in{{"x", x}};
    for (auto& np : down->named_parameters()) in.push_back(np);
    out.push_back(grad_case("LapDCN", probe([=] { return down->forward(x); }, rng), in, 1e-3));
  }
  {
    SwinEncoderConfig enc;
    enc.image_size = 56;
    enc.embed_dim = 8;
    enc.depths = {1, 1};
    enc.heads = {1, 2};
    ModuleInit init(11, DType::f64);
    auto seg = std::make_shared<InternalSegmenter>(init, enc, 3);
    std::mt19937_64 prng(13);
    for (auto& [name, p] : seg->named_parameters()) {
      if (name.find("relative_bias") != std::string::npos || name.find("head") != std::string::npos) {
        p.copy_from(Tensor::uniform(p.shape(), prng, -0.3, 0.3, DType::f64));
      }
    }
    Tensor x = leaf({2, 3, 56, 56}, rng, 0, 1);
    Inputs in{{"x", x}};
    for (auto& np : seg->named_parameters()) in.push_back(np);
    GradCheckOptions opt;
    opt.tolerance = 1e-3;
    opt.max_coords_per_tensor = 4;
    const GradCheckReport r = grad_check(probe([=] { return seg->forward(x); }, rng), in, opt);
    char buf[160];
    std::snprintf(buf, sizeof buf, "max rel error %.3g (%s[%lld])", r.max_rel_error, r.worst_tensor.c_str(),
                  static_cast<long long>(r.worst_index));
    out.push_back({"grad internal segmenter 56x56", r.passed, buf});
  }
  return out;
}

SelfCheck shuffle_inversion() {
  std::mt19937_64 rng(3);
  for (int r : {2, 3, 4}) {
    const Tensor x = Tensor::randn({2, 3 * r * r, 5, 4}, rng);
    if (!bitwise_equal(pixel_unshuffle(pixel_shuffle(x, r), r), x)) {
      return {"pixel shuffle inversion", false, "unshuffle(shuffle(x)) != x for r=" + std::to_string(r)};
    }
    const Tensor y = Tensor::randn({2, 3, 5 * r, 4 * r}, rng);
    if (!bitwise_equal(pixel_shuffle(pixel_unshuffle(y, r), r), y)) {
      return {"pixel shuffle inversion", false, "shuffle(unshuffle(y)) != y for r=" + std::to_string(r)};
    }
  }
  return {"pixel shuffle inversion", true, "r = 2, 3, 4"};
}

SelfCheck resizer_reduction() {
  NoGradGuard no_grad;
  ModuleInit init(21);
  ResizerShape shape{8, 2};
  LapDCN down(init, 2, 3, shape);
  LapSCN up(init, 2, 4, shape);
  std::mt19937_64 rng(4);
  const Tensor x = Tensor::uniform({1, 3, 32, 32}, rng, 0, 1);
  const Tensor s = Tensor::randn({1, 4, 8, 8}, rng);
  const double d1 = max_abs_diff(down.forward(x), bilinear_resize(bilinear_resize(x, 16, 16), 8, 8));
  const double d2 = max_abs_diff(up.forward(s), bilinear_resize(bilinear_resize(s, 16, 16), 32, 32));
  char buf[128];
  std::snprintf(buf, sizeof buf, "max deviation %.3g / %.3g", d1, d2);
  return {"zero-residual resizers equal cascaded bilinear", d1 <= 1e-6 && d2 <= 1e-6, buf};
}

SelfCheck metric_oracle() {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> c(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    LabelMap p(1, 8, 8), t(1, 8, 8);
    for (auto& v : p.values) v = static_cast<std::uint8_t>(c(rng));
    for (auto& v : t.values) v = static_cast<std::uint8_t>(c(rng));
    ConfusionMatrix cm(4);
    cm.accumulate(p, t);
    for (int k = 0; k < 4; ++k) {
      std::int64_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < p.values.size(); ++i) {
        tp += p.values[i] == k && t.values[i] == k;
        fp += p.values[i] == k && t.values[i] != k;
        fn += p.values[i] != k && t.values[i] == k;
      }
      const ClassMetrics m = class_metrics(cm, k);
      const ClassMetrics ref = metrics_from_counts(tp, fp, fn);
      if (m.iou != ref.iou || m.f1 != ref.f1 || std::abs(m.iou - m.f1 / (2 - m.f1)) > 1e-12) {
        return {"metric oracle", false, "class " + std::to_string(k) + " disagrees at trial " + std::to_string(trial)};
      }
    }
  }
  return {"metric oracle", true, "200 random 8x8 pairs"};
}

SelfCheck focal_reduces_to_cross_entropy() {
  std::mt19937_64 rng(6);
  const Tensor s = Tensor::randn({2, 4, 3, 3}, rng, 2.0, DType::f64);
  LabelMap t(2, 3, 3);
  std::uniform_int_distribution<int> c(0, 3);
  for (auto& v : t.values) v = static_cast<std::uint8_t>(c(rng));
  FocalLossConfig cfg;
  cfg.gamma = 0;
  const double focal = focal_loss(s, t, cfg).item();
  double ce = 0;
  for (std::int64_t b = 0; b < 2; ++b) {
    for (std::int64_t i = 0; i < 9; ++i) {
      double z = 0;
      for (std::int64_t k = 0; k < 4; ++k) z += std::exp(s.at((b * 4 + k) * 9 + i));
      ce += std::log(z) - s.at((b * 4 + t.values[static_cast<std::size_t>(b * 9 + i)]) * 9 + i);
    }
  }
  ce /= 18;
  char buf[96];
  std::snprintf(buf, sizeof buf, "|focal - ce| = %.3g", std::abs(focal - ce));
  return {"focal(gamma=0) equals cross-entropy", std::abs(focal - ce) <= 1e-6, buf};
}

SelfCheck schedule_endpoints() {
  const LRSchedule sched;
  const bool ok = lr_at_epoch(sched, 0) == 1e-4 && lr_at_epoch(sched, sched.total_epochs - 1) == 1e-6;
  return {"schedule endpoints", ok, "lr(0)=1e-4, lr(49)=1e-6"};
}

}  // namespace

std::vector<SelfCheck> run_selftest(std::ostream& out) {
  std::vector<SelfCheck> results;
  auto emit = [&](SelfCheck c) {
    out << (c.passed ? "PASS  " : "FAIL  ") << c.name << "  (" << c.detail << ")\n" << std::flush;
    results.push_back(std::move(c));
  };
  for (auto& c : gradient_checks()) emit(std::move(c));
  emit(shuffle_inversion());
  emit(resizer_reduction());
  emit(metric_oracle());
  emit(focal_reduces_to_cross_entropy());
  emit(schedule_endpoints());
  return results;
}

}  // namespace swintr
