#pragma once

#include <cstdint>
#include <vector>

#include "swintr/module.hpp"

namespace swintr {

struct SwinEncoderConfig {
  int image_size = 224;
  int patch_size = 4;
  int embed_dim = 32;
  std::vector<int> depths{2, 2, 2, 2};
  std::vector<int> heads{1, 2, 4, 8};
  int window = 7;
  int mlp_ratio = 4;

  int stages() const { return static_cast<int>(depths.size()); }
  // Token grid extent and channel count of stage s (0-based).
  int stage_grid(int s) const { return image_size / patch_size >> s; }
  int stage_channels(int s) const { return embed_dim << s; }
  // Window extent actually used at stage s: the whole grid once it is smaller than `window`.
  int stage_window(int s) const;
  // Throws ConfigError describing the first violated geometry constraint.
  void validate() const;
};

struct WindowPartition {
  Tensor windows;  // [B * windows_per_image, M*M, C]
  Tensor mask;     // [windows_per_image, M*M, M*M] with 0 / -inf entries; undefined when unshifted
  std::int64_t windows_per_image = 0;
};

// Splits x [B,H,W,C] into non-overlapping MxM windows after a cyclic shift by
// (-shift, -shift). shift must be 0 or M/2 (rounded down).
WindowPartition window_partition(const Tensor& x, int window, int shift);
// Inverse of window_partition, including the reverse cyclic shift.
Tensor window_reverse(const Tensor& windows, int window, std::int64_t height, std::int64_t width, int shift);
// Additive attention mask excluding token pairs that wrap around the shift boundary.
Tensor shifted_window_mask(std::int64_t height, std::int64_t width, int window, int shift, DType dtype);
// Row index into the (2M-1)^2 relative-position table for every token pair of a window.
std::vector<std::int64_t> relative_position_index(int window);

class WindowAttention : public Module {
 public:
  WindowAttention(ModuleInit& init, std::int64_t dim, int heads, int window);
  // windows [Bw, N, C]; mask [nW, N, N] or undefined. When probabilities is
  // non-null it receives the post-softmax attention [Bw, heads, N, N].
  Tensor forward(const Tensor& windows, const Tensor& mask, Tensor* probabilities = nullptr);

 private:
  std::int64_t dim_;
  int heads_;
  Linear* qkv_;
  Linear* proj_;
  Tensor bias_table_;
  std::vector<std::int64_t> bias_index_;
};

class SwinBlock : public Module {
 public:
  SwinBlock(ModuleInit& init, std::int64_t dim, int heads, int window, int shift, int mlp_ratio);
  Tensor forward(const Tensor& x);  // [B,H,W,C] -> same shape
  int shift() const { return shift_; }

 private:
  int window_;
  int shift_;
  LayerNorm* norm1_;
  WindowAttention* attn_;
  LayerNorm* norm2_;
  Linear* fc1_;
  Linear* fc2_;
};

// 2x2 neighborhood concatenation, layer_norm, linear 4C -> 2C.
class PatchMerging : public Module {
 public:
  PatchMerging(ModuleInit& init, std::int64_t dim);
  Tensor forward(const Tensor& x);

 private:
  LayerNorm* norm_;
  Linear* reduction_;
};

// Non-overlapping p x p patches, flattened and linearly embedded.
class PatchEmbed : public Module {
 public:
  PatchEmbed(ModuleInit& init, int patch_size, std::int64_t in_channels, std::int64_t embed_dim);
  Tensor forward(const Tensor& image);  // [B,3,H,W] -> [B,H/p,W/p,embed]

 private:
  int patch_;
  Linear* proj_;
  LayerNorm* norm_;
};

class SwinEncoder : public Module {
 public:
  SwinEncoder(ModuleInit& init, const SwinEncoderConfig& cfg);
  // Returns one [B, grid_s, grid_s, C_s] map per stage.
  std::vector<Tensor> forward(const Tensor& image);
  const SwinEncoderConfig& config() const { return cfg_; }

 private:
  SwinEncoderConfig cfg_;
  PatchEmbed* embed_;
  std::vector<PatchMerging*> merges_;  // merges_[s-1] precedes stage s
  std::vector<std::vector<SwinBlock*>> stages_;
  std::vector<LayerNorm*> out_norms_;
};

}  // namespace swintr
