#include "swintr/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "swintr/errors.hpp"

namespace fs = std::filesystem;

namespace swintr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return "";
  }
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) {
    return out;
  }
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(trim(item));
  }
  return out;
}

long long to_int(const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

int to_positive(const std::string& v) {
  const long long x = to_int(v);
  if (x < 1 || x > (1 << 24)) {
    throw ConfigError("expected a positive integer, got '" + v + "'");
  }
  return static_cast<int>(x);
}

double to_double(const std::string& v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("expected a finite number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& v) {
  std::vector<int> out;
  for (const auto& item : split_list(v)) {
    out.push_back(to_positive(item));
  }
  return out;
}

std::vector<double> to_double_list(const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) {
    out.push_back(to_double(item));
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, double>) {
      out += fmt_double(xs[i]);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out += xs[i];
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

struct Field {
  ConfigKey doc;
  std::function<void(RunConfig&, const std::string&, const fs::path&)> set;
  std::function<std::string(const RunConfig&)> get;
};

fs::path resolve(const std::string& v, const fs::path& base) {
  if (v.empty()) {
    return {};
  }
  const fs::path p(v);
  return p.is_absolute() || base.empty() ? p : (base / p).lexically_normal();
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto add = [&f](std::string key, std::string help, auto set, auto get) {
      const RunConfig defaults;
      Field field{{key, "", std::move(help)}, set, get};
      field.doc.default_value = field.get(defaults);
      f.push_back(std::move(field));
    };
    using P = const fs::path&;
    add("model.variant", "internal | uniform_4x | trainable_2x | trainable_4x",
        [](RunConfig& c, const std::string& v, P) { c.model.variant = parse_variant(v); },
        [](const RunConfig& c) { return std::string(variant_name(c.model.variant)); });
    add("model.image_size", "internal resolution of the encoder-decoder",
        [](RunConfig& c, const std::string& v, P) { c.model.encoder.image_size = to_positive(v); },
        [](const RunConfig& c) { return std::to_string(c.model.encoder.image_size); });
    add("model.patch_size", "patch extent of the embedding",
        [](RunConfig& c, const std::string& v, P) { c.model.encoder.patch_size = to_positive(v); },
        [](const RunConfig& c) { return std::to_string(c.model.encoder.patch_size); });
    add("model.embed_dim", "channels of the first encoder stage",
        [](RunConfig& c, const std::string& v, P) { c.model.encoder.embed_dim = to_positive(v); },
        [](const RunConfig& c) { return std::to_string(c.model.encoder.embed_dim); });
    add("model.depths", "transformer blocks per stage",
        [](RunConfig& c, const std::string& v, P) { c.model.encoder.depths = to_int_list(v); },
        [](const RunConfig& c) { return join(c.model.encoder.depths); });
    add("model.heads", "attention heads per stage",
        [](RunConfig& c, const std::string& v, P) { c.model.encoder.heads = to_int_list(v); },
        [](const RunConfig& c) { return join(c.model.encoder.heads); });
    add("model.window", "attention window extent",
        [](RunConfig& c, const std::string& v, P) { c.model.encoder.window = to_positive(v); },
        [](const RunConfig& c) { return std::to_string(c.model.encoder.window); });
    add("model.mlp_ratio", "hidden width factor of the block MLP",
        [](RunConfig& c, const std::string& v, P) { c.model.encoder.mlp_ratio = to_positive(v); },
        [](const RunConfig& c) { return std::to_string(c.model.encoder.mlp_ratio); });
    add("model.resizer_channels", "conv width inside the trainable resizers",
        [](RunConfig& c, const std::string& v, P) { c.model.resizer.channels = to_positive(v); },
        [](const RunConfig& c) { return std::to_string(c.model.resizer.channels); });
    add("model.resizer_depth", "conv-bn-relu layers per resizer block",
        [](RunConfig& c, const std::string& v, P) { c.model.resizer.depth = to_positive(v); },
        [](const RunConfig& c) { return std::to_string(c.model.resizer.depth); });
    add("model.decoder_widths", "decoder channels per level; empty mirrors the encoder",
        [](RunConfig& c, const std::string& v, P) { c.model.decoder_widths = to_int_list(v); },
        [](const RunConfig& c) { return join(c.model.decoder_widths); });
    add("data.manifest", "dataset manifest (image, mask, split per line)",
        [](RunConfig& c, const std::string& v, P base) { c.manifest = resolve(v, base); },
        [](const RunConfig& c) { return c.manifest.string(); });
    add("data.classes", "comma-separated class names; index = mask value",
        [](RunConfig& c, const std::string& v, P) { c.class_names = split_list(v); },
        [](const RunConfig& c) { return join(c.class_names); });
    add("data.val_fraction", "share of train records held out when the manifest has no val records",
        [](RunConfig& c, const std::string& v, P) { c.val_fraction = to_double(v); },
        [](const RunConfig& c) { return fmt_double(c.val_fraction); });
    add("data.split_seed", "seed of the validation hold-out",
        [](RunConfig& c, const std::string& v, P) { c.split_seed = to_uint(v); },
        [](const RunConfig& c) { return std::to_string(c.split_seed); });
    add("train.epochs", "number of epochs",
        [](RunConfig& c, const std::string& v, P) { c.train.schedule.total_epochs = to_positive(v); },
        [](const RunConfig& c) { return std::to_string(c.train.schedule.total_epochs); });
    add("train.batch_size", "training mini-batch size",
        [](RunConfig& c, const std::string& v, P) { c.train.batch_size = to_positive(v); },
        [](const RunConfig& c) { return std::to_string(c.train.batch_size); });
    add("train.eval_batch_size", "evaluation batch size",
        [](RunConfig& c, const std::string& v, P) { c.train.eval_batch_size = to_positive(v); },
        [](const RunConfig& c) { return std::to_string(c.train.eval_batch_size); });
    add("train.max_lr", "learning rate of the first epoch",
        [](RunConfig& c, const std::string& v, P) { c.train.schedule.max_lr = to_double(v); },
        [](const RunConfig& c) { return fmt_double(c.train.schedule.max_lr); });
    add("train.min_lr", "learning rate of the last epoch",
        [](RunConfig& c, const std::string& v, P) { c.train.schedule.min_lr = to_double(v); },
        [](const RunConfig& c) { return fmt_double(c.train.schedule.min_lr); });
    add("train.gamma", "focal loss focusing exponent",
        [](RunConfig& c, const std::string& v, P) { c.train.focal.gamma = to_double(v); },
        [](const RunConfig& c) { return fmt_double(c.train.focal.gamma); });
    add("train.alpha", "per-class focal weights; empty means all 1",
        [](RunConfig& c, const std::string& v, P) { c.train.focal.alpha = to_double_list(v); },
        [](const RunConfig& c) { return join(c.train.focal.alpha); });
    add("train.seed", "seed of initialization, shuffling and augmentation",
        [](RunConfig& c, const std::string& v, P) { c.train.seed = to_uint(v); },
        [](const RunConfig& c) { return std::to_string(c.train.seed); });
    add("train.augment", "random flips, rotations and color jitter",
        [](RunConfig& c, const std::string& v, P) { c.train.augmentation.enabled = to_bool(v); },
        [](const RunConfig& c) { return std::string(c.train.augmentation.enabled ? "true" : "false"); });
    add("train.freeze_resizers", "keep resizer weights at their initial values",
        [](RunConfig& c, const std::string& v, P) { c.train.freeze_resizers = to_bool(v); },
        [](const RunConfig& c) { return std::string(c.train.freeze_resizers ? "true" : "false"); });
    add("train.pretrain_epochs", "leading epochs training only the internal model",
        [](RunConfig& c, const std::string& v, P) { c.train.pretrain_epochs = static_cast<int>(to_int(v)); },
        [](const RunConfig& c) { return std::to_string(c.train.pretrain_epochs); });
    add("output.dir", "directory receiving the run artifacts",
        [](RunConfig& c, const std::string& v, P base) { c.output_dir = resolve(v, base); },
        [](const RunConfig& c) { return c.output_dir.string(); });
    return f;
  }();
  return table;
}

void validate(const RunConfig& c) {
  c.model.encoder.validate();
  if (c.class_names.size() < 2 || c.class_names.size() > 255) {
    throw ConfigError("data.classes needs 2..255 names");
  }
  if (std::set<std::string>(c.class_names.begin(), c.class_names.end()).size() != c.class_names.size()) {
    throw ConfigError("data.classes has duplicate names");
  }
  if (!(c.val_fraction > 0 && c.val_fraction < 1)) {
    throw ConfigError("data.val_fraction must lie in (0,1)");
  }
  if (c.train.schedule.max_lr <= 0 || c.train.schedule.min_lr < 0 || c.train.schedule.min_lr > c.train.schedule.max_lr) {
    throw ConfigError("learning rates must satisfy 0 <= train.min_lr <= train.max_lr, train.max_lr > 0");
  }
  if (c.train.focal.gamma < 0) {
    throw ConfigError("train.gamma must be >= 0");
  }
  if (!c.train.focal.alpha.empty() && c.train.focal.alpha.size() != c.class_names.size()) {
    throw ConfigError("train.alpha needs one weight per class");
  }
  if (c.train.pretrain_epochs < 0 || c.train.pretrain_epochs > c.train.schedule.total_epochs) {
    throw ConfigError("train.pretrain_epochs must lie in [0, train.epochs]");
  }
  if (variant_spec(c.model.variant).kind == ResizerKind::trainable && c.model.resizer.channels % 4 != 0) {
    throw ConfigError("model.resizer_channels must be divisible by 4");
  }
}

}  // namespace

const std::vector<ConfigKey>& run_config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) {
      k.push_back(f.doc);
    }
    return k;
  }();
  return keys;
}

RunConfig parse_run_config(const std::string& text, const std::string& origin, const fs::path& base_dir) {
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) {
    by_key[f.doc.key] = &f;
  }
  RunConfig cfg;
  std::set<std::string> seen;
  std::stringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') {
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + "expected key=value, got '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end()) {
      throw ConfigError(where + "unknown key '" + key + "'");
    }
    if (!seen.insert(key).second) {
      throw ConfigError(where + "duplicate key '" + key + "'");
    }
    try {
      it->second->set(cfg, value, base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  cfg.model.classes = static_cast<int>(cfg.class_names.size());
  try {
    validate(cfg);
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read config " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string(), fs::absolute(path).parent_path());
}

std::string format_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.doc.key + "=" + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace swintr
