#include "swintr/resizer.hpp"

namespace swintr {

Tensor uniform_resize(const Tensor& x, Rational scale) {
  if (scale.num <= 0 || scale.den <= 0) {
    throw ContractError("uniform_resize: scale must be positive");
  }
  const std::int64_t h = x.dim(-2);
  const std::int64_t w = x.dim(-1);
  if ((h * scale.num) % scale.den != 0 || (w * scale.num) % scale.den != 0) {
    throw ContractError("uniform_resize: extents " + std::to_string(h) + "x" + std::to_string(w) + " times " +
                        std::to_string(scale.num) + "/" + std::to_string(scale.den) + " are not integral");
  }
  return bilinear_resize(x, h * scale.num / scale.den, w * scale.num / scale.den);
}

Tensor UniformResizer::forward(const Tensor& x) {
  Tensor running = x;
  for (int l = 0; l < levels_; ++l) {
    running = direction_ == Direction::down ? uniform_resize(running, {1, 2}) : uniform_resize(running, {2, 1});
  }
  return running;
}

DesubpixelBlock::DesubpixelBlock(ModuleInit& init, std::int64_t in_channels, std::int64_t out_channels,
                                 const ResizerShape& shape) {
  body_ = register_module("body", std::make_unique<ConvBnReluStack>(init, in_channels * 4, shape.channels, shape.depth));
  head_ = register_module("head", std::make_unique<Conv2d>(init, shape.channels, out_channels, 3, 1, true, true));
}

Tensor DesubpixelBlock::forward(const Tensor& x) { return head_->forward(body_->forward(pixel_unshuffle(x, 2))); }

SubpixelBlock::SubpixelBlock(ModuleInit& init, std::int64_t in_channels, std::int64_t out_channels,
                             const ResizerShape& shape) {
  if (shape.channels % 4 != 0) {
    throw ConfigError("subpixel block width must be divisible by 4, got " + std::to_string(shape.channels));
  }
  body_ = register_module("body", std::make_unique<ConvBnReluStack>(init, in_channels, shape.channels, shape.depth));
  head_ = register_module("head", std::make_unique<Conv2d>(init, shape.channels / 4, out_channels, 3, 1, true, true));
}

Tensor SubpixelBlock::forward(const Tensor& x) { return head_->forward(pixel_shuffle(body_->forward(x), 2)); }

LapDCN::LapDCN(ModuleInit& init, int levels, std::int64_t channels, const ResizerShape& shape) {
  for (int l = 0; l < levels; ++l) {
    blocks_.push_back(register_module("level" + std::to_string(l),
                                      std::make_unique<DesubpixelBlock>(init, channels, channels, shape)));
  }
  projection_ = register_module("projection", std::make_unique<Conv2d>(init, channels, channels, 1, 0, true, true));
}

Tensor LapDCN::forward(const Tensor& x) {
  if (x.rank() != 4) {
    throw DimensionError("LapDCN expects NCHW input, got " + shape_str(x.shape()));
  }
  const std::int64_t f = std::int64_t{1} << blocks_.size();
  if (x.dim(2) % f != 0 || x.dim(3) % f != 0) {
    throw DimensionError("LapDCN: extents " + shape_str(x.shape()) + " not divisible by " + std::to_string(f));
  }
  Tensor running = x;
  for (auto* block : blocks_) {
    Tensor residual = block->forward(running);
    running = add(bilinear_resize(running, running.dim(2) / 2, running.dim(3) / 2), residual);
  }
  return add(running, projection_->forward(running));
}

void LapDCN::zero_residuals() {
  for (auto* block : blocks_) {
    block->head().weight().fill(0.0);
    block->head().bias().fill(0.0);
  }
  projection_->weight().fill(0.0);
  projection_->bias().fill(0.0);
}

LapSCN::LapSCN(ModuleInit& init, int levels, std::int64_t classes, const ResizerShape& shape) {
  for (int l = 0; l < levels; ++l) {
    blocks_.push_back(register_module("level" + std::to_string(l),
                                      std::make_unique<SubpixelBlock>(init, classes, classes, shape)));
  }
}

Tensor LapSCN::forward(const Tensor& x) {
  if (x.rank() != 4) {
    throw DimensionError("LapSCN expects NCHW input, got " + shape_str(x.shape()));
  }
  Tensor running = x;
  for (auto* block : blocks_) {
    Tensor residual = block->forward(running);
    running = add(bilinear_resize(running, running.dim(2) * 2, running.dim(3) * 2), residual);
  }
  return running;
}

void LapSCN::zero_residuals() {
  for (auto* block : blocks_) {
    block->head().weight().fill(0.0);
    block->head().bias().fill(0.0);
  }
}

ResizerKind parse_resizer_kind(const std::string& name) {
  if (name == "trainable") {
    return ResizerKind::trainable;
  }
  if (name == "uniform") {
    return ResizerKind::uniform;
  }
  if (name == "none") {
    return ResizerKind::none;
  }
  throw ConfigError("unknown resizer kind '" + name + "' (expected trainable, uniform or none)");
}

const char* resizer_kind_name(ResizerKind kind) {
  switch (kind) {
    case ResizerKind::trainable:
      return "trainable";
    case ResizerKind::uniform:
      return "uniform";
    case ResizerKind::none:
      return "none";
  }
  return "?";
}

ResizerPair build_resizer(ResizerKind kind, int k, std::int64_t image_channels, std::int64_t classes,
                          const ResizerShape& shape, ModuleInit& init) {
  if (kind == ResizerKind::none) {
    k = 0;
  }
  if (k < 0 || k > 2) {
    throw ConfigError("resizer levels must be 0, 1 or 2, got " + std::to_string(k));
  }
  ResizerPair pair;
  if (kind == ResizerKind::none || k == 0) {
    pair.down = std::make_unique<IdentityResizer>();
    pair.up = std::make_unique<IdentityResizer>();
  } else if (kind == ResizerKind::uniform) {
    pair.down = std::make_unique<UniformResizer>(UniformResizer::Direction::down, k);
    pair.up = std::make_unique<UniformResizer>(UniformResizer::Direction::up, k);
  } else {
    pair.down = std::make_unique<LapDCN>(init, k, image_channels, shape);
    pair.up = std::make_unique<LapSCN>(init, k, classes, shape);
  }
  return pair;
}

}  // namespace swintr
