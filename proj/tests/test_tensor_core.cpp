#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "swintr/autograd.hpp"
#include "swintr/errors.hpp"
#include "swintr/grad_check.hpp"
#include "swintr/ops.hpp"
#include "test_util.hpp"

namespace swintr {
namespace {

using test::random_leaf;
using test::random_tensor;

// Direct-summation cross-correlation.
std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto O = w.dim(0), K = w.dim(2), L = w.dim(3);
  const auto Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - L) / stride + 1;
  std::vector<double> out;
  for (std::int64_t n = 0; n < B; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t i = 0; i < Ho; ++i)
        for (std::int64_t j = 0; j < Wo; ++j) {
          double s = b.defined() ? b.at(o) : 0.0;
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t u = 0; u < K; ++u)
              for (std::int64_t v = 0; v < L; ++v) {
                const auto y = i * stride - pad + u, xx = j * stride - pad + v;
                if (y < 0 || y >= H || xx < 0 || xx >= W) continue;
                s += x.at(((n * C + c) * H + y) * W + xx) * w.at(((o * C + c) * K + u) * L + v);
              }
          out.push_back(s);
        }
  return out;
}

TEST(Conv2d, AllOnesOverlapCounts) {
  const Tensor x = Tensor::ones({1, 1, 3, 3}, DType::f64);
  const Tensor w = Tensor::ones({1, 1, 3, 3}, DType::f64);
  const Tensor y = conv2d(x, w, Tensor(), 1, 1);
  EXPECT_EQ(y.to_vector(), (std::vector<double>{4, 6, 4, 6, 9, 6, 4, 6, 4}));
}

TEST(Conv2d, CenterKernelIsIdentity) {
  const Tensor x = random_tensor({2, 1, 5, 4}, 1);
  Tensor w = Tensor::zeros({1, 1, 3, 3}, DType::f64);
  w.mutable_data<double>()[4] = 1.0;
  EXPECT_TRUE(bitwise_equal(conv2d(x, w, Tensor(), 1, 1), x));
}

TEST(Conv2d, MatchesDirectSummation) {
  struct Case {
    Shape x, w;
    int stride, pad;
  };
  const Case cases[] = {{{2, 3, 8, 8}, {4, 3, 3, 3}, 1, 1},
                        {{4, 8, 16, 16}, {5, 8, 3, 3}, 1, 1},
                        {{1, 2, 9, 7}, {3, 2, 5, 3}, 2, 2},
                        {{2, 6, 5, 5}, {4, 6, 1, 1}, 1, 0}};
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (const auto& c : cases) {
      const Tensor x = random_tensor(c.x, 10 + seed, DType::f32);
      const Tensor w = random_tensor(c.w, 20 + seed, DType::f32);
      const Tensor b = random_tensor({c.w[0]}, 30 + seed, DType::f32);
      const auto ref = naive_conv(x, w, b, c.stride, c.pad);
      const auto got = conv2d(x, w, b, c.stride, c.pad).to_vector();
      ASSERT_EQ(got.size(), ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) {
        EXPECT_NEAR(got[i], ref[i], 1e-5 * std::max(1.0, std::abs(ref[i])));
      }
    }
  }
}

TEST(Conv2d, RejectsChannelMismatchAndEvenKernels) {
  const Tensor x = Tensor::zeros({1, 3, 5, 5});
  EXPECT_THROW(conv2d(x, Tensor::zeros({2, 4, 3, 3}), Tensor()), DimensionError);
  EXPECT_THROW(conv2d(x, Tensor::zeros({2, 3, 2, 2}), Tensor()), DimensionError);
}

TEST(PixelShuffle, StatedIndexMap) {
  const Tensor x = Tensor::from({1, 4, 1, 1}, std::vector<double>{1, 2, 3, 4});
  const Tensor y = pixel_shuffle(x, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y.to_vector(), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(pixel_unshuffle(y, 2).to_vector(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(PixelShuffle, GeneralIndexMapOracle) {
  const int r = 3;
  const Tensor x = random_tensor({2, 2 * r * r, 3, 4}, 5);
  const Tensor y = pixel_shuffle(x, r);
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t c = 0; c < 2; ++c)
      for (std::int64_t h = 0; h < 3; ++h)
        for (std::int64_t w = 0; w < 4; ++w)
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) {
              const double expect = x.at(((b * 2 * r * r + c * r * r + i * r + j) * 3 + h) * 4 + w);
              const double got = y.at(((b * 2 + c) * 3 * r + h * r + i) * 4 * r + w * r + j);
              ASSERT_EQ(got, expect);
            }
}

TEST(PixelShuffle, FactorOneIsIdentityAndSumsArePreserved) {
  const Tensor x = random_tensor({1, 8, 3, 3}, 2);
  EXPECT_TRUE(bitwise_equal(pixel_shuffle(x, 1), x));
  auto a = x.to_vector();
  auto b = pixel_shuffle(x, 2).to_vector();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(PixelShuffle, BitwiseInversionForFactorsTwoToFour) {
  for (int r : {2, 3, 4}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const Tensor x = random_tensor({2, 3 * r * r, 4, 5}, seed, DType::f32);
      EXPECT_TRUE(bitwise_equal(pixel_unshuffle(pixel_shuffle(x, r), r), x));
      const Tensor y = random_tensor({2, 3, 4 * r, 5 * r}, seed + 100, DType::f32);
      EXPECT_TRUE(bitwise_equal(pixel_shuffle(pixel_unshuffle(y, r), r), y));
    }
  }
}

TEST(PixelShuffle, RejectsIndivisibleShapes) {
  EXPECT_THROW(pixel_shuffle(Tensor::zeros({1, 6, 2, 2}), 2), DimensionError);
  EXPECT_THROW(pixel_unshuffle(Tensor::zeros({1, 1, 5, 4}), 2), DimensionError);
}

TEST(Bilinear, HalfPixelExample) {
  const Tensor x = Tensor::from({1, 1, 1, 2}, std::vector<double>{0, 2});
  const auto y = bilinear_resize(x, 1, 4).to_vector();
  const std::vector<double> expect{0.0, 0.5, 1.5, 2.0};
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(y[static_cast<std::size_t>(i)], expect[static_cast<std::size_t>(i)], 1e-12);
  }
}

TEST(Bilinear, ConstantStaysConstant) {
  const Tensor x = Tensor::full({2, 3, 7, 5}, 0.25, DType::f64);
  for (auto [h, w] : {std::pair{3, 3}, {14, 10}, {1, 1}, {9, 2}}) {
    for (double v : bilinear_resize(x, h, w).to_vector()) {
      EXPECT_NEAR(v, 0.25, 1e-12);
    }
  }
}

TEST(Bilinear, HalvingIsTwoByTwoAverage) {
  const Tensor x = random_tensor({1, 2, 8, 6}, 4);
  const Tensor y = bilinear_resize(x, 4, 3);
  for (std::int64_t c = 0; c < 2; ++c)
    for (std::int64_t i = 0; i < 4; ++i)
      for (std::int64_t j = 0; j < 3; ++j) {
        double s = 0;
        for (int u = 0; u < 2; ++u)
          for (int v = 0; v < 2; ++v) s += x.at((c * 8 + 2 * i + u) * 6 + 2 * j + v);
        EXPECT_NEAR(y.at((c * 4 + i) * 3 + j), s / 4, 1e-12);
      }
}

TEST(Bilinear, RampSurvivesDownThenUpAwayFromBorders) {
  const std::int64_t n = 32;
  std::vector<double> ramp(static_cast<std::size_t>(n * n));
  for (std::int64_t y = 0; y < n; ++y)
    for (std::int64_t x = 0; x < n; ++x) ramp[static_cast<std::size_t>(y * n + x)] = 0.3 * x - 0.7 * y + 2.0;
  const Tensor img = Tensor::from({1, 1, n, n}, ramp);
  const Tensor back = bilinear_resize(bilinear_resize(img, n / 2, n / 2), n, n);
  for (std::int64_t y = 2; y < n - 2; ++y)
    for (std::int64_t x = 2; x < n - 2; ++x) EXPECT_NEAR(back.at(y * n + x), ramp[static_cast<std::size_t>(y * n + x)], 1e-6);
}

TEST(Norms, LayerNormStandardizes) {
  const Tensor x = random_tensor({4, 9}, 7, DType::f64, -5, 5);
  const Tensor y = layer_norm(x, Tensor::ones({9}, DType::f64), Tensor::zeros({9}, DType::f64));
  for (int r = 0; r < 4; ++r) {
    double m = 0, v = 0;
    for (int c = 0; c < 9; ++c) m += y.at(r * 9 + c);
    m /= 9;
    for (int c = 0; c < 9; ++c) v += (y.at(r * 9 + c) - m) * (y.at(r * 9 + c) - m);
    v /= 9;
    EXPECT_NEAR(m, 0.0, 1e-9);
    EXPECT_NEAR(v, 1.0, 1e-4);  // eps = 1e-5 shrinks the variance slightly
  }
}

TEST(Norms, BatchNormRunningStatistics) {
  const Tensor x = random_tensor({3, 2, 2, 2}, 8);
  Tensor rm = Tensor::zeros({2}, DType::f64), rv = Tensor::ones({2}, DType::f64);
  const Tensor g = Tensor::ones({2}, DType::f64), s = Tensor::zeros({2}, DType::f64);
  const Tensor y = batch_norm(x, rm, rv, g, s, true);
  for (std::int64_t c = 0; c < 2; ++c) {
    std::vector<double> vals;
    for (std::int64_t b = 0; b < 3; ++b)
      for (int i = 0; i < 4; ++i) vals.push_back(x.at((b * 2 + c) * 4 + i));
    const double m = std::accumulate(vals.begin(), vals.end(), 0.0) / 12;
    double ss = 0;
    for (double v : vals) ss += (v - m) * (v - m);
    EXPECT_NEAR(rm.at(c), 0.1 * m, 1e-12);
    EXPECT_NEAR(rv.at(c), 0.9 + 0.1 * ss / 11, 1e-12);
    const double expect0 = (vals[0] - m) / std::sqrt(ss / 12 + kNormEpsilon);
    EXPECT_NEAR(y.at(c * 4), expect0, 1e-9);
  }
  const Tensor z = batch_norm(x, rm, rv, g, s, false);
  EXPECT_NEAR(z.at(0), (x.at(0) - rm.at(0)) / std::sqrt(rv.at(0) + kNormEpsilon), 1e-12);
}

TEST(Elementwise, ReluSoftmaxAndBroadcast) {
  EXPECT_EQ(relu(Tensor::from({3}, std::vector<double>{-1, 0, 2})).to_vector(), (std::vector<double>{0, 0, 2}));
  const Tensor p = softmax(random_tensor({3, 5}, 9, DType::f64, -10, 10), 1);
  for (int r = 0; r < 3; ++r) {
    double s = 0;
    for (int c = 0; c < 5; ++c) s += p.at(r * 5 + c);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  const Tensor a = Tensor::from({2, 1}, std::vector<double>{1, 2});
  const Tensor b = Tensor::from({3}, std::vector<double>{10, 20, 30});
  EXPECT_EQ(add(a, b).to_vector(), (std::vector<double>{11, 21, 31, 12, 22, 32}));
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({4})), DimensionError);
}

TEST(Shape, RollMatchesIndexShift) {
  const Tensor x = Tensor::from({1, 5}, std::vector<double>{0, 1, 2, 3, 4});
  EXPECT_EQ(roll(x, {2}, {1}).to_vector(), (std::vector<double>{3, 4, 0, 1, 2}));
  EXPECT_EQ(roll(x, {-1}, {1}).to_vector(), (std::vector<double>{1, 2, 3, 4, 0}));
}

TEST(Shape, ReshapeAliasesAndCloneCopies) {
  Tensor x = Tensor::zeros({2, 3}, DType::f64);
  Tensor r = reshape(x, {3, -1});
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  x.mutable_data<double>()[0] = 5;
  EXPECT_EQ(r.at(0), 5);
  Tensor c = x.clone();
  x.mutable_data<double>()[0] = 7;
  EXPECT_EQ(c.at(0), 5);
}

TEST(Matmul, MatchesLoopOracleWithTransposes) {
  const Tensor a = random_tensor({2, 4, 3}, 11);
  const Tensor b = random_tensor({2, 5, 4}, 12);
  const Tensor y = matmul(a, b, true, true);  // [2,3,5] = a^T b^T
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 5; ++j) {
        double s = 0;
        for (int k = 0; k < 4; ++k) s += a.at((n * 4 + k) * 3 + i) * b.at((n * 5 + j) * 4 + k);
        EXPECT_NEAR(y.at((n * 3 + i) * 5 + j), s, 1e-12);
      }
}

TEST(Backward, SquareSumGradientIsTwoX) {
  Tensor x = random_leaf({4, 3}, 13);
  backward(sum(mul(x, x)));
  const auto g = x.grad().to_vector();
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(g[static_cast<std::size_t>(i)], 2 * x.at(i), 1e-12);
}

TEST(Backward, ReusedTensorAccumulatesBothPaths) {
  Tensor x = random_leaf({3}, 14);
  backward(sum(add(mul_scalar(x, 3.0), relu(x))));
  const auto g = x.grad().to_vector();
  for (std::int64_t i = 0; i < 3; ++i) EXPECT_NEAR(g[static_cast<std::size_t>(i)], 3.0 + (x.at(i) > 0 ? 1 : 0), 1e-12);
  backward(sum(x));
  EXPECT_NEAR(x.grad().at(0), 3.0 + (x.at(0) > 0 ? 1 : 0) + 1.0, 1e-12);
}

TEST(Backward, NonScalarLossIsAContractError) {
  Tensor x = random_leaf({3}, 15);
  EXPECT_THROW(backward(mul_scalar(x, 2.0)), ContractError);
}

TEST(Backward, ConvReluSumMatchesFiniteDifferences) {
  Tensor x = random_leaf({1, 2, 5, 5}, 16);
  Tensor w = random_leaf({3, 2, 3, 3}, 17);
  auto f = [&] { return sum(relu(conv2d(x, w, Tensor(), 1, 1))); };
  backward(f());
  const auto gw = w.grad().to_vector();
  auto wd = w.mutable_data<double>();
  const double eps = 1e-3;
  for (std::size_t i = 0; i < wd.size(); i += 5) {
    const double orig = wd[i];
    wd[i] = orig + eps;
    const double p = f().item();
    wd[i] = orig - eps;
    const double m = f().item();
    wd[i] = orig;
    EXPECT_NEAR(gw[i], (p - m) / (2 * eps), 1e-4 * std::max(1.0, std::abs(gw[i])));
  }
}

TEST(GradCheck, QuadraticIsExactToRounding) {
  Tensor x = random_leaf({5}, 18);
  const auto r = grad_check([&] { return sum(mul(x, x)); }, {{"x", x}});
  EXPECT_LT(r.max_rel_error, 1e-8);
  EXPECT_TRUE(r.passed);
}

// Each op, three random instances, projected onto random weights so every
// output coordinate matters.
struct OpCase {
  const char* name;
  std::function<std::pair<std::function<Tensor()>, std::vector<std::pair<std::string, Tensor>>>(std::uint64_t)> make;
};

std::function<Tensor()> project(std::function<Tensor()> f, std::uint64_t seed) {
  auto weights = std::make_shared<Tensor>();
  return [f, weights, seed] {
    Tensor y = f();
    if (!weights->defined()) *weights = random_tensor(y.shape(), seed);
    return sum(mul(y, *weights));
  };
}

std::vector<OpCase> op_cases() {
  using In = std::vector<std::pair<std::string, Tensor>>;
  std::vector<OpCase> c;
  c.push_back({"add_broadcast", [](std::uint64_t s) {
                 Tensor a = random_leaf({2, 3, 4}, s), b = random_leaf({3, 1}, s + 1);
                 return std::pair{project([=] { return add(a, b); }, s + 2), In{{"a", a}, {"b", b}}};
               }});
  c.push_back({"sub_mul", [](std::uint64_t s) {
                 Tensor a = random_leaf({3, 4}, s), b = random_leaf({4}, s + 1);
                 return std::pair{project([=] { return mul(sub(a, b), a); }, s + 2), In{{"a", a}, {"b", b}}};
               }});
  c.push_back({"relu_scalar", [](std::uint64_t s) {
                 Tensor a = random_leaf({20}, s);
                 return std::pair{project([=] { return relu(mul_scalar(a, 1.5)); }, s + 2), In{{"a", a}}};
               }});
  c.push_back({"gelu", [](std::uint64_t s) {
                 Tensor a = random_leaf({20}, s, -3, 3);
                 return std::pair{project([=] { return gelu(a); }, s + 2), In{{"a", a}}};
               }});
  c.push_back({"softmax", [](std::uint64_t s) {
                 Tensor a = random_leaf({3, 4, 5}, s, -3, 3);
                 return std::pair{project([=] { return softmax(a, 1); }, s + 2), In{{"a", a}}};
               }});
  c.push_back({"mean_permute_reshape", [](std::uint64_t s) {
                 Tensor a = random_leaf({2, 3, 4}, s);
                 return std::pair{project([=] { return mul(reshape(permute(a, {2, 0, 1}), {4, 6}), mean(a)); }, s + 2),
                                  In{{"a", a}}};
               }});
  c.push_back({"roll", [](std::uint64_t s) {
                 Tensor a = random_leaf({2, 5, 4, 3}, s);
                 return std::pair{project([=] { return roll(a, {-2, 1}, {1, 2}); }, s + 2), In{{"a", a}}};
               }});
  c.push_back({"concat_narrow", [](std::uint64_t s) {
                 Tensor a = random_leaf({2, 3, 4}, s), b = random_leaf({2, 2, 4}, s + 1);
                 return std::pair{project([=] { return narrow(concat({a, b}, 1), 1, 1, 3); }, s + 2),
                                  In{{"a", a}, {"b", b}}};
               }});
  c.push_back({"gather_rows", [](std::uint64_t s) {
                 Tensor t = random_leaf({5, 3}, s);
                 return std::pair{project([=] { return gather_rows(t, {4, 0, 4, 2, 1, 1}); }, s + 2), In{{"t", t}}};
               }});
  c.push_back({"matmul", [](std::uint64_t s) {
                 Tensor a = random_leaf({2, 3, 4}, s), b = random_leaf({2, 3, 5}, s + 1);
                 return std::pair{project([=] { return matmul(a, b, true, false); }, s + 2), In{{"a", a}, {"b", b}}};
               }});
  c.push_back({"linear", [](std::uint64_t s) {
                 Tensor x = random_leaf({2, 3, 4}, s), w = random_leaf({6, 4}, s + 1), b = random_leaf({6}, s + 3);
                 return std::pair{project([=] { return linear(x, w, b); }, s + 2), In{{"x", x}, {"w", w}, {"b", b}}};
               }});
  c.push_back({"conv2d_3x3", [](std::uint64_t s) {
                 Tensor x = random_leaf({2, 3, 6, 5}, s), w = random_leaf({4, 3, 3, 3}, s + 1),
                        b = random_leaf({4}, s + 3);
                 return std::pair{project([=] { return conv2d(x, w, b, 1, 1); }, s + 2),
                                  In{{"x", x}, {"w", w}, {"b", b}}};
               }});
  c.push_back({"conv2d_1x1", [](std::uint64_t s) {
                 Tensor x = random_leaf({2, 3, 4, 4}, s), w = random_leaf({5, 3, 1, 1}, s + 1);
                 return std::pair{project([=] { return conv2d(x, w, Tensor(), 1, 0); }, s + 2),
                                  In{{"x", x}, {"w", w}}};
               }});
  c.push_back({"pixel_shuffle", [](std::uint64_t s) {
                 Tensor x = random_leaf({1, 12, 2, 3}, s);
                 return std::pair{project([=] { return pixel_shuffle(x, 2); }, s + 2), In{{"x", x}}};
               }});
  c.push_back({"pixel_unshuffle", [](std::uint64_t s) {
                 Tensor x = random_leaf({1, 2, 6, 3}, s);
                 return std::pair{project([=] { return pixel_unshuffle(x, 3); }, s + 2), In{{"x", x}}};
               }});
  c.push_back({"bilinear_up", [](std::uint64_t s) {
                 Tensor x = random_leaf({1, 2, 3, 4}, s);
                 return std::pair{project([=] { return bilinear_resize(x, 7, 8); }, s + 2), In{{"x", x}}};
               }});
  c.push_back({"bilinear_down", [](std::uint64_t s) {
                 Tensor x = random_leaf({1, 2, 8, 6}, s);
                 return std::pair{project([=] { return bilinear_resize(x, 3, 3); }, s + 2), In{{"x", x}}};
               }});
  c.push_back({"layer_norm", [](std::uint64_t s) {
                 Tensor x = random_leaf({3, 7}, s), g = random_leaf({7}, s + 1), b = random_leaf({7}, s + 3);
                 return std::pair{project([=] { return layer_norm(x, g, b); }, s + 2),
                                  In{{"x", x}, {"gain", g}, {"shift", b}}};
               }});
  c.push_back({"batch_norm", [](std::uint64_t s) {
                 Tensor x = random_leaf({3, 2, 3, 3}, s), g = random_leaf({2}, s + 1), b = random_leaf({2}, s + 3);
                 auto rm = std::make_shared<Tensor>(Tensor::zeros({2}, DType::f64));
                 auto rv = std::make_shared<Tensor>(Tensor::ones({2}, DType::f64));
                 return std::pair{project([=] { return batch_norm(x, *rm, *rv, g, b, true); }, s + 2),
                                  In{{"x", x}, {"gain", g}, {"shift", b}}};
               }});
  return c;
}

class OpGradients : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradients, CentralDifferencesAgreeOnThreeSeeds) {
  const OpCase oc = op_cases()[GetParam()];
  for (std::uint64_t seed : {101u, 202u, 303u}) {
    auto [loss, inputs] = oc.make(seed);
    const auto r = grad_check(loss, inputs);
    EXPECT_TRUE(r.passed) << oc.name << " seed " << seed << ": " << r.max_rel_error << " at " << r.worst_tensor << "["
                          << r.worst_index << "]";
    EXPECT_LT(r.max_rel_error, 1e-4);
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradients, ::testing::Range<std::size_t>(0, op_cases().size()),
                         [](const auto& info) { return std::string(op_cases()[info.param].name); });

TEST(GradCheck, DetectsAPerturbedConvBackward) {
  Tensor x = random_leaf({1, 2, 4, 4}, 40), w = random_leaf({2, 2, 3, 3}, 41);
  testing::set_conv_backward_perturbation(0.05);
  const auto r = grad_check([&] { return sum(conv2d(x, w, Tensor(), 1, 1)); }, {{"x", x}, {"w", w}});
  testing::set_conv_backward_perturbation(0.0);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.worst_tensor, "w");
}

TEST(Determinism, ForwardIsBitwiseReproducible) {
  const Tensor x = random_tensor({2, 3, 9, 9}, 50, DType::f32);
  const Tensor w = random_tensor({4, 3, 3, 3}, 51, DType::f32);
  auto run = [&] { return softmax(bilinear_resize(conv2d(x, w, Tensor(), 1, 1), 5, 5), 1); };
  EXPECT_TRUE(bitwise_equal(run(), run()));
}

TEST(NoGrad, GuardSuppressesRecording) {
  Tensor x = random_leaf({3}, 60);
  NoGradGuard guard;
  const Tensor y = mul(x, x);
  EXPECT_TRUE(y.is_leaf());
  EXPECT_FALSE(y.requires_grad());
}

}  // namespace
}  // namespace swintr
