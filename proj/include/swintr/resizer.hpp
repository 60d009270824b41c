#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "swintr/module.hpp"

namespace swintr {

struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;
};

// Bilinear resize of the trailing two axes by an exact rational factor.
// Throws ContractError when the scaled extents are not integral.
Tensor uniform_resize(const Tensor& x, Rational scale);

// Common interface of every down/upsampler the segmentation model can wrap.
class Resizer : public Module {
 public:
  virtual Tensor forward(const Tensor& x) = 0;
  // Spatial factor is 2^levels (down for downsamplers, up for upsamplers).
  virtual int levels() const = 0;
  virtual bool trainable() const = 0;
};

class IdentityResizer final : public Resizer {
 public:
  Tensor forward(const Tensor& x) override { return x; }
  int levels() const override { return 0; }
  bool trainable() const override { return false; }
};

// Parameter-free: `levels` chained bilinear 2x steps, the same base branch the
// trainable resizers cascade.
class UniformResizer final : public Resizer {
 public:
  enum class Direction { down, up };
  UniformResizer(Direction direction, int levels) : direction_(direction), levels_(levels) {}
  Tensor forward(const Tensor& x) override;
  int levels() const override { return levels_; }
  bool trainable() const override { return false; }

 private:
  Direction direction_;
  int levels_;
};

struct ResizerShape {
  int channels = 32;  // working width of each conv stack
  int depth = 2;      // conv-bn-relu layers per block
};

// pixel_unshuffle(2) -> conv stack -> zero-initialized conv head.
// Produces a residual at half the input resolution.
class DesubpixelBlock : public Module {
 public:
  DesubpixelBlock(ModuleInit& init, std::int64_t in_channels, std::int64_t out_channels, const ResizerShape& shape);
  Tensor forward(const Tensor& x);
  Conv2d& head() { return *head_; }

 private:
  ConvBnReluStack* body_;
  Conv2d* head_;
};

// conv stack -> pixel_shuffle(2) -> zero-initialized conv head.
// Produces a residual at twice the input resolution.
class SubpixelBlock : public Module {
 public:
  SubpixelBlock(ModuleInit& init, std::int64_t in_channels, std::int64_t out_channels, const ResizerShape& shape);
  Tensor forward(const Tensor& x);
  Conv2d& head() { return *head_; }

 private:
  ConvBnReluStack* body_;
  Conv2d* head_;
};

// Trainable downsampler: per level, a fixed bilinear halving of the running
// image corrected by a learned residual, then a residual 1x1 projection.
class LapDCN final : public Resizer {
 public:
  LapDCN(ModuleInit& init, int levels, std::int64_t channels, const ResizerShape& shape);
  Tensor forward(const Tensor& x) override;
  int levels() const override { return static_cast<int>(blocks_.size()); }
  bool trainable() const override { return true; }
  // Sets the residual heads and the projection back to zero.
  void zero_residuals();

 private:
  std::vector<DesubpixelBlock*> blocks_;
  Conv2d* projection_;
};

// Trainable upsampler on class-score maps: per level, a fixed bilinear
// doubling corrected by a learned subpixel residual.
class LapSCN final : public Resizer {
 public:
  LapSCN(ModuleInit& init, int levels, std::int64_t classes, const ResizerShape& shape);
  Tensor forward(const Tensor& x) override;
  int levels() const override { return static_cast<int>(blocks_.size()); }
  bool trainable() const override { return true; }
  void zero_residuals();

 private:
  std::vector<SubpixelBlock*> blocks_;
};

enum class ResizerKind { trainable, uniform, none };

ResizerKind parse_resizer_kind(const std::string& name);
const char* resizer_kind_name(ResizerKind kind);

struct ResizerPair {
  std::unique_ptr<Resizer> down;
  std::unique_ptr<Resizer> up;
};

// Builds an independently parameterized (down, up) pair. k must be 0, 1 or 2;
// kind none ignores k and yields identities.
ResizerPair build_resizer(ResizerKind kind, int k, std::int64_t image_channels, std::int64_t classes,
                          const ResizerShape& shape, ModuleInit& init);

}  // namespace swintr
