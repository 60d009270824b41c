#pragma once

#include <cstdint>
#include <vector>

namespace swintr {

inline constexpr std::uint8_t kIgnoreLabel = 255;

// Dense per-pixel class indices, row-major [batch, height, width].
struct LabelMap {
  std::int64_t batch = 1;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> values;

  LabelMap() = default;
  LabelMap(std::int64_t b, std::int64_t h, std::int64_t w, std::uint8_t fill = 0)
      : batch(b), height(h), width(w), values(static_cast<std::size_t>(b * h * w), fill) {}

  std::int64_t size() const { return batch * height * width; }
  std::uint8_t& at(std::int64_t b, std::int64_t y, std::int64_t x) {
    return values[static_cast<std::size_t>((b * height + y) * width + x)];
  }
  std::uint8_t at(std::int64_t b, std::int64_t y, std::int64_t x) const {
    return values[static_cast<std::size_t>((b * height + y) * width + x)];
  }
  bool same_extents(const LabelMap& o) const { return batch == o.batch && height == o.height && width == o.width; }
};

// Stacks single-image maps of equal extents into one batch.
LabelMap stack_labels(const std::vector<const LabelMap*>& maps);
// Nearest-neighbor resampling with pixel-center alignment; never invents labels.
LabelMap resize_labels_nearest(const LabelMap& labels, std::int64_t height, std::int64_t width);

}  // namespace swintr
