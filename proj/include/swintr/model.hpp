#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "swintr/resizer.hpp"
#include "swintr/unetpp.hpp"

namespace swintr {

// The four compared configurations.
enum class Variant { internal, uniform_4x, trainable_2x, trainable_4x };

Variant parse_variant(const std::string& name);
const char* variant_name(Variant v);
std::vector<Variant> all_variants();

struct VariantSpec {
  ResizerKind kind;
  int levels;  // resizer pyramid depth k; external size = internal size * 2^k
};
VariantSpec variant_spec(Variant v);
int external_resolution(Variant v, int internal_size = 224);

struct ModelConfig {
  Variant variant = Variant::trainable_2x;
  SwinEncoderConfig encoder;
  int classes = 4;
  ResizerShape resizer;
  std::vector<int> decoder_widths;  // empty: mirror encoder channels
};

// downsampler -> internal segmenter -> upsampler.
class SwinTRModel : public Module {
 public:
  SwinTRModel(const ModelConfig& cfg, ModuleInit& init);
  // image [B,3,S,S] with S == external_resolution() -> scores [B,n,S,S].
  Tensor forward(const Tensor& image);

  Variant variant() const { return cfg_.variant; }
  int external_resolution() const { return external_; }
  int classes() const { return cfg_.classes; }
  const ModelConfig& config() const { return cfg_; }
  Resizer& downsampler() { return *down_; }
  Resizer& upsampler() { return *up_; }
  InternalSegmenter& internal() { return *internal_; }
  // Zeroes the residual branches of trainable resizers (no-op otherwise).
  void zero_resizer_residuals();

 private:
  ModelConfig cfg_;
  int external_;
  Resizer* down_;
  InternalSegmenter* internal_;
  Resizer* up_;
};

std::unique_ptr<SwinTRModel> build_model(const ModelConfig& cfg, std::uint64_t seed, DType dtype = DType::f32);

// Forward-activation footprint estimate. Each entry is one stored activation
// tensor of a documented layer inventory; parameters are excluded.
enum class MemoryArch { unet_hr, swintr };

struct ActivationEntry {
  std::string layer;
  std::int64_t elements;
};

struct MemoryEstimateConfig {
  // Full-resolution U-Net: 5 levels with these widths, two conv-bn-relu per level.
  std::vector<int> unet_widths{64, 128, 256, 512, 1024};
  int classes = 4;
  SwinEncoderConfig encoder;
  ResizerShape resizer;
};

std::vector<ActivationEntry> activation_inventory(MemoryArch arch, std::int64_t height, std::int64_t width,
                                                  const MemoryEstimateConfig& cfg = {});
std::int64_t estimate_activation_memory(MemoryArch arch, std::int64_t height, std::int64_t width, int precision_bytes,
                                        const MemoryEstimateConfig& cfg = {});

}  // namespace swintr
