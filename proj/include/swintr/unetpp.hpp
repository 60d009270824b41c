#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "swintr/module.hpp"
#include "swintr/swin.hpp"

namespace swintr {

// Replaces one concatenated source of one decoder node by zeros (used to
// verify that every skip connection feeds the output).
struct DecoderAblation {
  int level = 0;   // i
  int column = 0;  // j
  int source = 0;  // position in the node's concatenation list
};

// Nested U-Net++ decoder. Node (i, j), j >= 1, concatenates the level-i
// encoder map, every earlier node (i, 1..j-1), and node (i+1, j-1) upsampled
// by 2, then applies conv-bn-relu twice.
class UnetPlusPlusDecoder : public Module {
 public:
  // encoder_channels[i] / widths[i] give the channel count of encoder level i
  // and of decoder nodes on level i. output_size is the final square extent.
  UnetPlusPlusDecoder(ModuleInit& init, std::vector<int> encoder_channels, std::vector<int> widths, int classes,
                      int output_size);
  // pyramid: one [B, H_i, W_i, C_i] map per level (encoder layout).
  Tensor forward(const std::vector<Tensor>& pyramid, const std::optional<DecoderAblation>& ablation = std::nullopt);

  int levels() const { return static_cast<int>(encoder_channels_.size()); }
  // Evaluation order of nested nodes: increasing column, decreasing level.
  std::vector<std::pair<int, int>> node_order() const;
  int node_count() const { return static_cast<int>(node_order().size()); }
  // Number of concatenated inputs of node (i, j).
  int source_count(int /*level*/, int column) const { return column + 1; }

 private:
  std::vector<int> encoder_channels_;
  std::vector<int> widths_;
  int output_size_;
  std::map<std::pair<int, int>, ConvBnReluStack*> nodes_;
  Conv2d* head_;
};

// Encoder + decoder at the fixed internal resolution.
class InternalSegmenter : public Module {
 public:
  InternalSegmenter(ModuleInit& init, const SwinEncoderConfig& encoder, int classes, std::vector<int> decoder_widths = {});
  // image [B,3,S,S] with S = encoder.image_size -> scores [B,n,S,S].
  Tensor forward(const Tensor& image);
  SwinEncoder& encoder() { return *encoder_; }
  UnetPlusPlusDecoder& decoder() { return *decoder_; }
  int image_size() const { return encoder_->config().image_size; }
  int classes() const { return classes_; }

 private:
  int classes_;
  SwinEncoder* encoder_;
  UnetPlusPlusDecoder* decoder_;
};

}  // namespace swintr
