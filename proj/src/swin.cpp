#include "swintr/swin.hpp"

#include <cmath>
#include <limits>

namespace swintr {

int SwinEncoderConfig::stage_window(int s) const { return std::min(window, stage_grid(s)); }

void SwinEncoderConfig::validate() const {
  if (depths.empty() || depths.size() > 4) {
    throw ConfigError("encoder needs between 1 and 4 stages, got " + std::to_string(depths.size()));
  }
  if (heads.size() != depths.size()) {
    throw ConfigError("encoder heads list must have one entry per stage");
  }
  if (patch_size < 1 || embed_dim < 1 || window < 1 || mlp_ratio < 1) {
    throw ConfigError("encoder patch size, embed dim, window and mlp ratio must be positive");
  }
  const int reduction = patch_size << (stages() - 1);
  if (image_size <= 0 || image_size % reduction != 0) {
    throw ConfigError("image size " + std::to_string(image_size) + " must be divisible by patch size * 2^(stages-1) = " +
                      std::to_string(reduction));
  }
  for (int s = 0; s < stages(); ++s) {
    if (depths[static_cast<std::size_t>(s)] < 1) {
      throw ConfigError("stage " + std::to_string(s) + " has no blocks");
    }
    const int h = heads[static_cast<std::size_t>(s)];
    if (h < 1 || stage_channels(s) % h != 0) {
      throw ConfigError("stage " + std::to_string(s) + ": " + std::to_string(stage_channels(s)) +
                        " channels not divisible by " + std::to_string(h) + " heads");
    }
    if (stage_grid(s) % stage_window(s) != 0) {
      throw ConfigError("stage " + std::to_string(s) + ": grid " + std::to_string(stage_grid(s)) +
                        " not divisible by window " + std::to_string(stage_window(s)));
    }
  }
}

Tensor shifted_window_mask(std::int64_t height, std::int64_t width, int window, int shift, DType dtype) {
  // Label each post-shift position by the band it came from, then forbid
  // pairs whose labels differ.
  auto band = [&](std::int64_t pos, std::int64_t extent) -> int {
    if (pos < extent - window) {
      return 0;
    }
    return pos < extent - shift ? 1 : 2;
  };
  const std::int64_t wh = height / window;
  const std::int64_t ww = width / window;
  const std::int64_t n = static_cast<std::int64_t>(window) * window;
  std::vector<double> values(static_cast<std::size_t>(wh * ww * n * n), 0.0);
  std::vector<int> label(static_cast<std::size_t>(n));
  for (std::int64_t a = 0; a < wh; ++a) {
    for (std::int64_t b = 0; b < ww; ++b) {
      for (std::int64_t i = 0; i < window; ++i) {
        for (std::int64_t j = 0; j < window; ++j) {
          label[static_cast<std::size_t>(i * window + j)] =
              band(a * window + i, height) * 3 + band(b * window + j, width);
        }
      }
      const std::int64_t w = a * ww + b;
      for (std::int64_t p = 0; p < n; ++p) {
        for (std::int64_t q = 0; q < n; ++q) {
          if (label[static_cast<std::size_t>(p)] != label[static_cast<std::size_t>(q)]) {
            values[static_cast<std::size_t>((w * n + p) * n + q)] = -std::numeric_limits<double>::infinity();
          }
        }
      }
    }
  }
  return Tensor::from_doubles({wh * ww, n, n}, values, dtype);
}

WindowPartition window_partition(const Tensor& x, int window, int shift) {
  if (x.rank() != 4) {
    throw DimensionError("window_partition expects [B,H,W,C], got " + shape_str(x.shape()));
  }
  const std::int64_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (window < 1 || h % window != 0 || w % window != 0) {
    throw DimensionError("window_partition: extents " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by window " + std::to_string(window));
  }
  if (shift != 0 && shift != window / 2) {
    throw ContractError("window_partition: shift must be 0 or window/2");
  }
  Tensor shifted = shift > 0 ? roll(x, {-shift, -shift}, {1, 2}) : x;
  WindowPartition out;
  out.windows_per_image = (h / window) * (w / window);
  Tensor t = reshape(shifted, {b, h / window, window, w / window, window, c});
  t = permute(t, {0, 1, 3, 2, 4, 5});
  out.windows = reshape(t, {b * out.windows_per_image, static_cast<std::int64_t>(window) * window, c});
  if (shift > 0) {
    out.mask = shifted_window_mask(h, w, window, shift, x.dtype());
  }
  return out;
}

Tensor window_reverse(const Tensor& windows, int window, std::int64_t height, std::int64_t width, int shift) {
  const std::int64_t per_image = (height / window) * (width / window);
  const std::int64_t c = windows.dim(-1);
  const std::int64_t b = windows.dim(0) / per_image;
  Tensor t = reshape(windows, {b, height / window, width / window, window, window, c});
  t = permute(t, {0, 1, 3, 2, 4, 5});
  t = reshape(t, {b, height, width, c});
  return shift > 0 ? roll(t, {shift, shift}, {1, 2}) : t;
}

std::vector<std::int64_t> relative_position_index(int window) {
  const std::int64_t n = static_cast<std::int64_t>(window) * window;
  const std::int64_t span = 2 * window - 1;
  std::vector<std::int64_t> index(static_cast<std::size_t>(n * n));
  for (std::int64_t p = 0; p < n; ++p) {
    for (std::int64_t q = 0; q < n; ++q) {
      const std::int64_t dh = p / window - q / window + window - 1;
      const std::int64_t dw = p % window - q % window + window - 1;
      index[static_cast<std::size_t>(p * n + q)] = dh * span + dw;
    }
  }
  return index;
}

WindowAttention::WindowAttention(ModuleInit& init, std::int64_t dim, int heads, int window)
    : dim_(dim), heads_(heads), bias_index_(relative_position_index(window)) {
  qkv_ = register_module("qkv", std::make_unique<Linear>(init, dim, 3 * dim));
  proj_ = register_module("proj", std::make_unique<Linear>(init, dim, dim));
  const std::int64_t span = 2 * window - 1;
  bias_table_ = register_parameter("relative_bias", Tensor::zeros({span * span, heads}, init.dtype));
}

Tensor WindowAttention::forward(const Tensor& windows, const Tensor& mask, Tensor* probabilities) {
  const std::int64_t bw = windows.dim(0), n = windows.dim(1), c = windows.dim(2);
  if (c != dim_) {
    throw DimensionError("window attention expects " + std::to_string(dim_) + " channels, got " + std::to_string(c));
  }
  if (n * n != static_cast<std::int64_t>(bias_index_.size())) {
    throw DimensionError("window attention built for a different window size");
  }
  const std::int64_t d = c / heads_;
  Tensor qkv = reshape(qkv_->forward(windows), {bw, n, 3, heads_, d});
  qkv = permute(qkv, {2, 0, 3, 1, 4});
  const Shape head_shape{bw, heads_, n, d};
  Tensor q = mul_scalar(reshape(narrow(qkv, 0, 0, 1), head_shape), 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor k = reshape(narrow(qkv, 0, 1, 1), head_shape);
  Tensor v = reshape(narrow(qkv, 0, 2, 1), head_shape);

  Tensor scores = matmul(q, k, false, true);
  Tensor bias = permute(reshape(gather_rows(bias_table_, bias_index_), {n, n, heads_}), {2, 0, 1});
  scores = add(scores, bias);
  if (mask.defined()) {
    const std::int64_t nw = mask.dim(0);
    scores = reshape(scores, {bw / nw, nw, heads_, n, n});
    scores = add(scores, reshape(mask, {nw, 1, n, n}));
    scores = reshape(scores, {bw, heads_, n, n});
  }
  Tensor attn = softmax(scores, -1);
  if (probabilities != nullptr) {
    *probabilities = attn.detach();
  }
  Tensor out = matmul(attn, v);
  out = reshape(permute(out, {0, 2, 1, 3}), {bw, n, c});
  return proj_->forward(out);
}

SwinBlock::SwinBlock(ModuleInit& init, std::int64_t dim, int heads, int window, int shift, int mlp_ratio)
    : window_(window), shift_(shift) {
  norm1_ = register_module("norm1", std::make_unique<LayerNorm>(init, dim));
  attn_ = register_module("attn", std::make_unique<WindowAttention>(init, dim, heads, window));
  norm2_ = register_module("norm2", std::make_unique<LayerNorm>(init, dim));
  fc1_ = register_module("fc1", std::make_unique<Linear>(init, dim, dim * mlp_ratio));
  fc2_ = register_module("fc2", std::make_unique<Linear>(init, dim * mlp_ratio, dim));
}

Tensor SwinBlock::forward(const Tensor& x) {
  const std::int64_t h = x.dim(1), w = x.dim(2);
  const WindowPartition part = window_partition(norm1_->forward(x), window_, shift_);
  Tensor attended = window_reverse(attn_->forward(part.windows, part.mask), window_, h, w, shift_);
  Tensor y = add(x, attended);
  return add(y, fc2_->forward(gelu(fc1_->forward(norm2_->forward(y)))));
}

PatchMerging::PatchMerging(ModuleInit& init, std::int64_t dim) {
  norm_ = register_module("norm", std::make_unique<LayerNorm>(init, 4 * dim));
  reduction_ = register_module("reduction", std::make_unique<Linear>(init, 4 * dim, 2 * dim, false));
}

Tensor PatchMerging::forward(const Tensor& x) {
  const std::int64_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("patch merging needs even extents, got " + shape_str(x.shape()));
  }
  Tensor t = reshape(x, {b, h / 2, 2, w / 2, 2, c});
  t = reshape(permute(t, {0, 1, 3, 4, 2, 5}), {b, h / 2, w / 2, 4 * c});
  return reduction_->forward(norm_->forward(t));
}

PatchEmbed::PatchEmbed(ModuleInit& init, int patch_size, std::int64_t in_channels, std::int64_t embed_dim)
    : patch_(patch_size) {
  proj_ = register_module("proj", std::make_unique<Linear>(init, in_channels * patch_size * patch_size, embed_dim));
  norm_ = register_module("norm", std::make_unique<LayerNorm>(init, embed_dim));
}

Tensor PatchEmbed::forward(const Tensor& image) {
  Tensor patches = permute(pixel_unshuffle(image, patch_), {0, 2, 3, 1});
  return norm_->forward(proj_->forward(patches));
}

SwinEncoder::SwinEncoder(ModuleInit& init, const SwinEncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  embed_ = register_module("embed", std::make_unique<PatchEmbed>(init, cfg_.patch_size, 3, cfg_.embed_dim));
  for (int s = 0; s < cfg_.stages(); ++s) {
    const std::string prefix = "stage" + std::to_string(s);
    if (s > 0) {
      merges_.push_back(
          register_module(prefix + ".merge", std::make_unique<PatchMerging>(init, cfg_.stage_channels(s - 1))));
    }
    const int window = cfg_.stage_window(s);
    const int shift = window < cfg_.stage_grid(s) ? window / 2 : 0;
    std::vector<SwinBlock*> blocks;
    for (int i = 0; i < cfg_.depths[static_cast<std::size_t>(s)]; ++i) {
      blocks.push_back(register_module(prefix + ".block" + std::to_string(i),
                                       std::make_unique<SwinBlock>(init, cfg_.stage_channels(s),
                                                                   cfg_.heads[static_cast<std::size_t>(s)], window,
                                                                   i % 2 == 1 ? shift : 0, cfg_.mlp_ratio)));
    }
    stages_.push_back(std::move(blocks));
    out_norms_.push_back(register_module(prefix + ".out_norm", std::make_unique<LayerNorm>(init, cfg_.stage_channels(s))));
  }
}

std::vector<Tensor> SwinEncoder::forward(const Tensor& image) {
  if (image.rank() != 4 || image.dim(1) != 3 || image.dim(2) != cfg_.image_size || image.dim(3) != cfg_.image_size) {
    throw ConfigError("encoder expects [B,3," + std::to_string(cfg_.image_size) + "," + std::to_string(cfg_.image_size) +
                      "] input, got " + shape_str(image.shape()));
  }
  std::vector<Tensor> pyramid;
  Tensor x = embed_->forward(image);
  for (int s = 0; s < cfg_.stages(); ++s) {
    if (s > 0) {
      x = merges_[static_cast<std::size_t>(s - 1)]->forward(x);
    }
    for (auto* block : stages_[static_cast<std::size_t>(s)]) {
      x = block->forward(x);
    }
    pyramid.push_back(out_norms_[static_cast<std::size_t>(s)]->forward(x));
  }
  return pyramid;
}

}  // namespace swintr
