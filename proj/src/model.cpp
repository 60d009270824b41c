#include "swintr/model.hpp"

#include <cmath>

namespace swintr {

Variant parse_variant(const std::string& name) {
  for (Variant v : all_variants()) {
    if (name == variant_name(v)) {
      return v;
    }
  }
  throw ConfigError("unknown model variant '" + name +
                    "' (expected internal, uniform_4x, trainable_2x or trainable_4x)");
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::internal:
      return "internal";
    case Variant::uniform_4x:
      return "uniform_4x";
    case Variant::trainable_2x:
      return "trainable_2x";
    case Variant::trainable_4x:
      return "trainable_4x";
  }
  return "?";
}

std::vector<Variant> all_variants() {
  return {Variant::internal, Variant::uniform_4x, Variant::trainable_2x, Variant::trainable_4x};
}

VariantSpec variant_spec(Variant v) {
  switch (v) {
    case Variant::internal:
      return {ResizerKind::none, 0};
    case Variant::uniform_4x:
      return {ResizerKind::uniform, 2};
    case Variant::trainable_2x:
      return {ResizerKind::trainable, 1};
    case Variant::trainable_4x:
      return {ResizerKind::trainable, 2};
  }
  throw ConfigError("invalid variant");
}

int external_resolution(Variant v, int internal_size) { return internal_size << variant_spec(v).levels; }

SwinTRModel::SwinTRModel(const ModelConfig& cfg, ModuleInit& init) : cfg_(cfg) {
  const VariantSpec spec = variant_spec(cfg_.variant);
  external_ = swintr::external_resolution(cfg_.variant, cfg_.encoder.image_size);
  ResizerPair pair = build_resizer(spec.kind, spec.levels, 3, cfg_.classes, cfg_.resizer, init);
  down_ = register_module("down", std::move(pair.down));
  internal_ = register_module("internal",
                              std::make_unique<InternalSegmenter>(init, cfg_.encoder, cfg_.classes, cfg_.decoder_widths));
  up_ = register_module("up", std::move(pair.up));
}

Tensor SwinTRModel::forward(const Tensor& image) {
  if (image.rank() != 4 || image.dim(2) != external_ || image.dim(3) != external_) {
    throw ContractError(std::string("model variant ") + variant_name(cfg_.variant) + " expects " +
                        std::to_string(external_) + "x" + std::to_string(external_) + " input, got " +
                        shape_str(image.shape()));
  }
  return up_->forward(internal_->forward(down_->forward(image)));
}

void SwinTRModel::zero_resizer_residuals() {
  if (auto* d = dynamic_cast<LapDCN*>(down_)) {
    d->zero_residuals();
  }
  if (auto* u = dynamic_cast<LapSCN*>(up_)) {
    u->zero_residuals();
  }
}

std::unique_ptr<SwinTRModel> build_model(const ModelConfig& cfg, std::uint64_t seed, DType dtype) {
  ModuleInit init(seed, dtype);
  return std::make_unique<SwinTRModel>(cfg, init);
}

namespace {

std::int64_t half_up(std::int64_t v) { return (v + 1) / 2; }

void add_entry(std::vector<ActivationEntry>& out, std::string layer, std::int64_t channels, std::int64_t area) {
  out.push_back({std::move(layer), channels * area});
}

void unet_inventory(std::int64_t h, std::int64_t w, const MemoryEstimateConfig& cfg, std::vector<ActivationEntry>& out) {
  const auto levels = cfg.unet_widths.size();
  std::vector<std::int64_t> area(levels);
  std::int64_t lh = h;
  std::int64_t lw = w;
  for (std::size_t l = 0; l < levels; ++l) {
    area[l] = lh * lw;
    lh = half_up(lh);
    lw = half_up(lw);
  }
  add_entry(out, "input", 3, area[0]);
  for (std::size_t l = 0; l < levels; ++l) {
    const std::int64_t c = cfg.unet_widths[l];
    const std::string p = "enc" + std::to_string(l);
    for (int rep = 0; rep < 2; ++rep) {
      add_entry(out, p + ".conv", c, area[l]);
      add_entry(out, p + ".bn", c, area[l]);
      add_entry(out, p + ".relu", c, area[l]);
    }
    if (l + 1 < levels) {
      add_entry(out, p + ".pool", c, area[l + 1]);
    }
  }
  for (std::size_t l = levels - 1; l-- > 0;) {
    const std::int64_t c = cfg.unet_widths[l];
    const std::string p = "dec" + std::to_string(l);
    add_entry(out, p + ".upconv", c, area[l]);
    add_entry(out, p + ".concat", 2 * c, area[l]);
    for (int rep = 0; rep < 2; ++rep) {
      add_entry(out, p + ".conv", c, area[l]);
      add_entry(out, p + ".bn", c, area[l]);
      add_entry(out, p + ".relu", c, area[l]);
    }
  }
  add_entry(out, "head", cfg.classes, area[0]);
}

void internal_inventory(const MemoryEstimateConfig& cfg, std::vector<ActivationEntry>& out) {
  const SwinEncoderConfig& e = cfg.encoder;
  const std::int64_t p2 = static_cast<std::int64_t>(e.patch_size) * e.patch_size;
  const auto g0 = static_cast<std::int64_t>(e.stage_grid(0));
  add_entry(out, "embed.unshuffle", 3 * p2, g0 * g0);
  add_entry(out, "embed.permute", 3 * p2, g0 * g0);
  add_entry(out, "embed.linear", e.embed_dim, g0 * g0);
  add_entry(out, "embed.norm", e.embed_dim, g0 * g0);
  for (int s = 0; s < e.stages(); ++s) {
    const auto g = static_cast<std::int64_t>(e.stage_grid(s));
    const std::int64_t a = g * g;
    const std::int64_t c = e.stage_channels(s);
    const std::int64_t heads = e.heads[static_cast<std::size_t>(s)];
    const std::int64_t n = static_cast<std::int64_t>(e.stage_window(s)) * e.stage_window(s);
    const std::string p = "stage" + std::to_string(s);
    if (s > 0) {
      const std::int64_t pc = e.stage_channels(s - 1);
      add_entry(out, p + ".merge.gather", 4 * pc, a);
      add_entry(out, p + ".merge.norm", 4 * pc, a);
      add_entry(out, p + ".merge.linear", c, a);
    }
    for (int b = 0; b < e.depths[static_cast<std::size_t>(s)]; ++b) {
      const std::string q = p + ".block" + std::to_string(b);
      // norm, shift, partition, qkv (+head split), scaled q, attention output,
      // head merge, projection, reverse, residual, norm2, fc1, gelu, fc2, residual
      add_entry(out, q + ".tokens", 3 * c, a);
      add_entry(out, q + ".qkv", 6 * c, a);
      add_entry(out, q + ".q_scaled", c, a);
      add_entry(out, q + ".scores", 4 * heads * n, a);  // logits, +bias, +mask, softmax
      add_entry(out, q + ".attn_out", 5 * c, a);
      add_entry(out, q + ".mlp", 2 * c + 8 * c + c, a);
    }
    add_entry(out, p + ".out_norm", c, a);
  }
  // Decoder nodes at mirrored widths.
  const int levels = e.stages();
  for (int j = 1; j < levels; ++j) {
    for (int i = levels - 1 - j; i >= 0; --i) {
      const auto g = static_cast<std::int64_t>(e.stage_grid(i));
      const std::int64_t a = g * g;
      const std::int64_t wi = e.stage_channels(i);
      const std::int64_t below = e.stage_channels(i + 1);
      const std::string p = "node" + std::to_string(i) + "_" + std::to_string(j);
      add_entry(out, p + ".up", below, a);
      add_entry(out, p + ".concat", static_cast<std::int64_t>(j) * wi + below, a);
      add_entry(out, p + ".convs", 6 * wi, a);
    }
  }
  add_entry(out, "head", cfg.classes, g0 * g0);
  add_entry(out, "lift", cfg.classes, static_cast<std::int64_t>(e.image_size) * e.image_size);
}

void swintr_inventory(std::int64_t h, std::int64_t w, const MemoryEstimateConfig& cfg,
                      std::vector<ActivationEntry>& out) {
  const double ratio = static_cast<double>(std::max(h, w)) / cfg.encoder.image_size;
  const int k = ratio <= 1.0 ? 0 : static_cast<int>(std::lround(std::log2(ratio)));
  const std::int64_t c = cfg.resizer.channels;
  const std::int64_t d = cfg.resizer.depth;
  add_entry(out, "input", 3, h * w);
  std::vector<std::int64_t> area{h * w};
  std::int64_t lh = h;
  std::int64_t lw = w;
  for (int l = 1; l <= k; ++l) {
    lh = half_up(lh);
    lw = half_up(lw);
    area.push_back(lh * lw);
    const std::string p = "lapdcn.level" + std::to_string(l);
    add_entry(out, p + ".unshuffle", 12, area.back());
    add_entry(out, p + ".body", 3 * d * c, area.back());
    add_entry(out, p + ".head", 3, area.back());
    add_entry(out, p + ".bilinear", 3, area.back());
    add_entry(out, p + ".merge", 3, area.back());
  }
  if (k > 0) {
    add_entry(out, "lapdcn.projection", 6, area.back());
  }
  const std::int64_t s = cfg.encoder.image_size;
  add_entry(out, "internal.input", 3, s * s);
  internal_inventory(cfg, out);
  for (int l = k; l >= 1; --l) {
    const std::string p = "lapscn.level" + std::to_string(l);
    add_entry(out, p + ".body", 3 * d * c, area[static_cast<std::size_t>(l)]);
    add_entry(out, p + ".shuffle", c / 4, area[static_cast<std::size_t>(l - 1)]);
    add_entry(out, p + ".head", cfg.classes, area[static_cast<std::size_t>(l - 1)]);
    add_entry(out, p + ".bilinear", cfg.classes, area[static_cast<std::size_t>(l - 1)]);
    add_entry(out, p + ".merge", cfg.classes, area[static_cast<std::size_t>(l - 1)]);
  }
}

}  // namespace

std::vector<ActivationEntry> activation_inventory(MemoryArch arch, std::int64_t height, std::int64_t width,
                                                  const MemoryEstimateConfig& cfg) {
  if (height <= 0 || width <= 0) {
    throw ContractError("activation estimate needs positive extents");
  }
  std::vector<ActivationEntry> out;
  if (arch == MemoryArch::unet_hr) {
    unet_inventory(height, width, cfg, out);
  } else {
    swintr_inventory(height, width, cfg, out);
  }
  return out;
}

std::int64_t estimate_activation_memory(MemoryArch arch, std::int64_t height, std::int64_t width, int precision_bytes,
                                        const MemoryEstimateConfig& cfg) {
  std::int64_t total = 0;
  for (const auto& e : activation_inventory(arch, height, width, cfg)) {
    total += e.elements;
  }
  return total * precision_bytes;
}

}  // namespace swintr
