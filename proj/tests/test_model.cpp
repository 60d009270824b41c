#include <gtest/gtest.h>

#include <cmath>

#include "swintr/autograd.hpp"
#include "swintr/errors.hpp"
#include "swintr/model.hpp"
#include "swintr/ops.hpp"
#include "test_util.hpp"

namespace swintr {
namespace {

using test::random_tensor;

ModelConfig toy_config(Variant v) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.encoder.embed_dim = 16;
  cfg.encoder.depths = {1, 1, 1, 1};
  cfg.resizer.channels = 8;
  return cfg;
}

ModelConfig tiny_config(Variant v) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.encoder.image_size = 56;
  cfg.encoder.embed_dim = 8;
  cfg.encoder.depths = {1, 1};
  cfg.encoder.heads = {1, 2};
  cfg.resizer.channels = 8;
  cfg.resizer.depth = 1;
  return cfg;
}

TEST(Variants, ResolutionBinding) {
  EXPECT_EQ(external_resolution(Variant::internal), 224);
  EXPECT_EQ(external_resolution(Variant::uniform_4x), 896);
  EXPECT_EQ(external_resolution(Variant::trainable_2x), 448);
  EXPECT_EQ(external_resolution(Variant::trainable_4x), 896);
  EXPECT_EQ(external_resolution(Variant::trainable_2x, 56), 112);
}

TEST(Variants, NamesRoundTrip) {
  EXPECT_EQ(all_variants().size(), 4u);
  for (Variant v : all_variants()) {
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  }
  EXPECT_THROW(parse_variant("uniform_2x"), ConfigError);
  EXPECT_THROW(parse_variant(""), ConfigError);
}

TEST(Variants, ResizerKinds) {
  EXPECT_EQ(variant_spec(Variant::internal).kind, ResizerKind::none);
  EXPECT_EQ(variant_spec(Variant::uniform_4x).kind, ResizerKind::uniform);
  EXPECT_EQ(variant_spec(Variant::uniform_4x).levels, 2);
  EXPECT_EQ(variant_spec(Variant::trainable_2x).levels, 1);
  EXPECT_EQ(variant_spec(Variant::trainable_4x).kind, ResizerKind::trainable);
}

class ModelForward : public ::testing::TestWithParam<Variant> {};

TEST_P(ModelForward, ShapesAtBatchOneAndTwo) {
  auto model = build_model(toy_config(GetParam()), 1);
  const int s = model->external_resolution();
  EXPECT_EQ(s, external_resolution(GetParam()));
  model->train(false);
  NoGradGuard guard;
  for (std::int64_t b : {1, 2}) {
    Tensor y = model->forward(random_tensor({b, 3, s, s}, 2, DType::f32, 0.0, 1.0));
    EXPECT_EQ(y.shape(), (Shape{b, 4, s, s}));
  }
}

TEST_P(ModelForward, WrongResolutionIsContractError) {
  auto model = build_model(tiny_config(GetParam()), 3);
  const int s = model->external_resolution();
  EXPECT_THROW(model->forward(Tensor::zeros({1, 3, s * 2, s * 2})), ContractError);
  EXPECT_THROW(model->forward(Tensor::zeros({1, 3, s, s / 2})), ContractError);
}

INSTANTIATE_TEST_SUITE_P(AllVariants, ModelForward, ::testing::ValuesIn(all_variants()),
                         [](const auto& info) { return std::string(variant_name(info.param)); });

TEST(Model, InternalVariantHasIdentityResizers) {
  auto model = build_model(tiny_config(Variant::internal), 4);
  EXPECT_EQ(model->downsampler().levels(), 0);
  EXPECT_EQ(model->upsampler().parameter_count(), 0);
  model->train(false);
  Tensor x = random_tensor({1, 3, 56, 56}, 5, DType::f32, 0.0, 1.0);
  EXPECT_EQ(model->forward(x).to_vector(), model->internal().forward(x).to_vector());
}

TEST(Model, ZeroResidualTrainableFourXEqualsUniformFourX) {
  auto trainable = build_model(toy_config(Variant::trainable_4x), 6, DType::f64);
  auto uniform = build_model(toy_config(Variant::uniform_4x), 7, DType::f64);
  trainable->zero_resizer_residuals();
  auto src = trainable->internal().named_state();
  auto dst = uniform->internal().named_state();
  ASSERT_EQ(src.size(), dst.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    ASSERT_EQ(src[i].first, dst[i].first);
    dst[i].second.copy_from(src[i].second);
  }
  trainable->train(false);
  uniform->train(false);
  NoGradGuard guard;
  Tensor x = random_tensor({1, 3, 896, 896}, 8, DType::f64, 0.0, 1.0);
  Tensor a = trainable->forward(x);
  Tensor b = uniform->forward(x);
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(a.at(i) - b.at(i)));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Model, EveryParameterReceivesGradient) {
  auto model = build_model(tiny_config(Variant::trainable_2x), 9, DType::f64);
  // Move the zero-initialized residual heads off zero so upstream weights see signal.
  std::mt19937_64 rng(10);
  for (auto& [name, t] : model->named_parameters()) {
    if (name.find("head") != std::string::npos || name.find("projection") != std::string::npos) {
      t.copy_from(Tensor::uniform(t.shape(), rng, -0.1, 0.1, t.dtype()));
    }
  }
  Tensor x = random_tensor({2, 3, 112, 112}, 11, DType::f64, 0.0, 1.0);
  Tensor y = model->forward(x);
  backward(mean(mul(y, y)));
  for (const auto& [name, t] : model->named_parameters()) {
    ASSERT_TRUE(t.has_grad()) << name;
    double norm = 0.0;
    for (double g : t.grad().to_vector()) {
      norm += g * g;
    }
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(Model, SameSeedSameParameters) {
  auto a = build_model(tiny_config(Variant::trainable_2x), 12);
  auto b = build_model(tiny_config(Variant::trainable_2x), 12);
  auto c = build_model(tiny_config(Variant::trainable_2x), 13);
  auto pa = a->parameters(), pb = b->parameters(), pc = c->parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].to_vector(), pb[i].to_vector());
    any_diff = any_diff || pa[i].to_vector() != pc[i].to_vector();
  }
  EXPECT_TRUE(any_diff);
}

TEST(MemoryEstimate, UnetToSwinRatioAtFullHd) {
  const auto unet = estimate_activation_memory(MemoryArch::unet_hr, 1920, 1080, 4);
  const auto swin = estimate_activation_memory(MemoryArch::swintr, 1920, 1080, 4);
  EXPECT_GE(static_cast<double>(unet) / static_cast<double>(swin), 4.0);
}

TEST(MemoryEstimate, SwinGrowsFarSlowerThanArea) {
  const double full = static_cast<double>(estimate_activation_memory(MemoryArch::swintr, 1920, 1080, 4));
  const double base = static_cast<double>(estimate_activation_memory(MemoryArch::swintr, 224, 224, 4));
  const double area = (1920.0 * 1080.0) / (224.0 * 224.0);
  EXPECT_LT(full / base, area / 2.0);
}

TEST(MemoryEstimate, UnetScalesWithArea) {
  const double a = static_cast<double>(estimate_activation_memory(MemoryArch::unet_hr, 1920, 1080, 4));
  const double b = static_cast<double>(estimate_activation_memory(MemoryArch::unet_hr, 3840, 2160, 4));
  EXPECT_NEAR(b / a, 4.0, 0.01);
  const double c = static_cast<double>(estimate_activation_memory(MemoryArch::unet_hr, 256, 256, 4));
  const double d = static_cast<double>(estimate_activation_memory(MemoryArch::unet_hr, 512, 512, 4));
  EXPECT_DOUBLE_EQ(d / c, 4.0);
}

TEST(MemoryEstimate, PrecisionIsLinearAndInventoryIsConsistent) {
  const auto f32 = estimate_activation_memory(MemoryArch::swintr, 896, 896, 4);
  const auto f16 = estimate_activation_memory(MemoryArch::swintr, 896, 896, 2);
  EXPECT_EQ(f32, 2 * f16);
  std::int64_t elements = 0;
  for (const auto& e : activation_inventory(MemoryArch::swintr, 896, 896)) {
    EXPECT_GT(e.elements, 0) << e.layer;
    elements += e.elements;
  }
  EXPECT_EQ(elements * 4, f32);
}

TEST(MemoryEstimate, ResizerLevelsFollowInputSize) {
  auto count = [](std::int64_t s, const std::string& prefix) {
    int n = 0;
    for (const auto& e : activation_inventory(MemoryArch::swintr, s, s)) {
      n += e.layer.rfind(prefix, 0) == 0 && e.layer.find(".merge") != std::string::npos ? 1 : 0;
    }
    return n;
  };
  EXPECT_EQ(count(224, "lapdcn"), 0);
  EXPECT_EQ(count(448, "lapdcn"), 1);
  EXPECT_EQ(count(896, "lapdcn"), 2);
  EXPECT_EQ(count(896, "lapscn"), 2);
}

TEST(MemoryEstimate, RejectsNonPositiveExtents) {
  EXPECT_THROW(estimate_activation_memory(MemoryArch::unet_hr, 0, 10, 4), ContractError);
  EXPECT_THROW(estimate_activation_memory(MemoryArch::swintr, 10, -1, 4), ContractError);
}

}  // namespace
}  // namespace swintr
