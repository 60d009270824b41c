#include "swintr/unetpp.hpp"

namespace swintr {

UnetPlusPlusDecoder::UnetPlusPlusDecoder(ModuleInit& init, std::vector<int> encoder_channels, std::vector<int> widths,
                                         int classes, int output_size)
    : encoder_channels_(std::move(encoder_channels)), widths_(std::move(widths)), output_size_(output_size) {
  if (widths_.empty()) {
    widths_ = encoder_channels_;
  }
  if (widths_.size() != encoder_channels_.size()) {
    throw ConfigError("decoder needs one width per encoder level");
  }
  if (classes < 1) {
    throw ConfigError("decoder needs at least one class");
  }
  const auto channels_of = [&](int i, int j) {
    return j == 0 ? encoder_channels_[static_cast<std::size_t>(i)] : widths_[static_cast<std::size_t>(i)];
  };
  for (auto [i, j] : node_order()) {
    std::int64_t in = channels_of(i + 1, j - 1);
    for (int p = 0; p < j; ++p) {
      in += channels_of(i, p);
    }
    nodes_[{i, j}] = register_module("node" + std::to_string(i) + "_" + std::to_string(j),
                                     std::make_unique<ConvBnReluStack>(init, in, widths_[static_cast<std::size_t>(i)], 2));
  }
  const int top = levels() - 1;
  head_ = register_module("head", std::make_unique<Conv2d>(init, channels_of(0, top), classes, 1, 0, true));
}

std::vector<std::pair<int, int>> UnetPlusPlusDecoder::node_order() const {
  std::vector<std::pair<int, int>> order;
  const int l = levels();
  for (int j = 1; j < l; ++j) {
    for (int i = l - 1 - j; i >= 0; --i) {
      order.emplace_back(i, j);
    }
  }
  return order;
}

Tensor UnetPlusPlusDecoder::forward(const std::vector<Tensor>& pyramid, const std::optional<DecoderAblation>& ablation) {
  if (static_cast<int>(pyramid.size()) != levels()) {
    throw DimensionError("decoder expects " + std::to_string(levels()) + " pyramid levels, got " +
                         std::to_string(pyramid.size()));
  }
  std::map<std::pair<int, int>, Tensor> x;
  for (int i = 0; i < levels(); ++i) {
    const Tensor& level = pyramid[static_cast<std::size_t>(i)];
    if (level.rank() != 4 || level.dim(3) != encoder_channels_[static_cast<std::size_t>(i)] ||
        (i > 0 && (level.dim(1) * 2 != pyramid[static_cast<std::size_t>(i - 1)].dim(1) ||
                   level.dim(2) * 2 != pyramid[static_cast<std::size_t>(i - 1)].dim(2)))) {
      throw DimensionError("decoder: pyramid level " + std::to_string(i) + " has shape " + shape_str(level.shape()));
    }
    x[{i, 0}] = permute(level, {0, 3, 1, 2});
  }
  for (auto [i, j] : node_order()) {
    std::vector<Tensor> sources;
    for (int p = 0; p < j; ++p) {
      sources.push_back(x.at({i, p}));
    }
    const Tensor& below = x.at({i + 1, j - 1});
    sources.push_back(bilinear_resize(below, below.dim(2) * 2, below.dim(3) * 2));
    if (ablation && ablation->level == i && ablation->column == j) {
      auto& s = sources.at(static_cast<std::size_t>(ablation->source));
      s = Tensor::zeros(s.shape(), s.dtype());
    }
    x[{i, j}] = nodes_.at({i, j})->forward(concat(sources, 1));
  }
  Tensor scores = head_->forward(x.at({0, levels() - 1}));
  return bilinear_resize(scores, output_size_, output_size_);
}

InternalSegmenter::InternalSegmenter(ModuleInit& init, const SwinEncoderConfig& encoder, int classes,
                                     std::vector<int> decoder_widths)
    : classes_(classes) {
  encoder_ = register_module("encoder", std::make_unique<SwinEncoder>(init, encoder));
  std::vector<int> channels;
  for (int s = 0; s < encoder.stages(); ++s) {
    channels.push_back(encoder.stage_channels(s));
  }
  if (channels.size() < 2) {
    throw ConfigError("the nested decoder needs at least two encoder stages");
  }
  decoder_ = register_module("decoder", std::make_unique<UnetPlusPlusDecoder>(init, channels, std::move(decoder_widths),
                                                                              classes, encoder.image_size));
}

Tensor InternalSegmenter::forward(const Tensor& image) {
  const int s = image_size();
  if (image.rank() != 4 || image.dim(2) != s || image.dim(3) != s) {
    throw ContractError("internal segmenter runs at exactly " + std::to_string(s) + "x" + std::to_string(s) +
                        ", got " + shape_str(image.shape()));
  }
  return decoder_->forward(encoder_->forward(image));
}

}  // namespace swintr
