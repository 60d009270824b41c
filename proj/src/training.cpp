#include "swintr/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

#include <opencv2/imgproc.hpp>

#include "swintr/autograd.hpp"
#include "swintr/errors.hpp"

namespace fs = std::filesystem;

namespace swintr {

Tensor focal_loss(const Tensor& scores, const LabelMap& target, const FocalLossConfig& cfg) {
  if (scores.rank() != 4) {
    throw DimensionError("focal_loss expects scores [B,n,H,W], got " + shape_str(scores.shape()));
  }
  const std::int64_t b = scores.dim(0), n = scores.dim(1), h = scores.dim(2), w = scores.dim(3);
  if (target.batch != b || target.height != h || target.width != w ||
      static_cast<std::int64_t>(target.values.size()) != b * h * w) {
    throw DimensionError("focal_loss: target " + std::to_string(target.batch) + "x" + std::to_string(target.height) +
                         "x" + std::to_string(target.width) + " does not match scores " + shape_str(scores.shape()));
  }
  if (cfg.gamma < 0) {
    throw ConfigError("focal gamma must be >= 0");
  }
  if (!cfg.alpha.empty() && static_cast<std::int64_t>(cfg.alpha.size()) != n) {
    throw ConfigError("focal alpha needs one weight per class (" + std::to_string(n) + "), got " +
                      std::to_string(cfg.alpha.size()));
  }
  const std::int64_t plane = h * w;
  for (std::int64_t i = 0; i < b * plane; ++i) {
    const std::uint8_t t = target.values[static_cast<std::size_t>(i)];
    if (t != cfg.ignore_label && t >= n) {
      const std::int64_t bi = i / plane, y = (i % plane) / w, x = i % w;
      throw DataError("focal_loss: label " + std::to_string(t) + " at (batch " + std::to_string(bi) + ", y " +
                      std::to_string(y) + ", x " + std::to_string(x) + ") outside " + std::to_string(n) + " classes");
    }
  }
  return dispatch(scores.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* s = scores.data<T>().data();
    // Softmax probabilities and per-pixel gradient coefficients for backward.
    auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(b * n * plane));
    auto coeff = std::make_shared<std::vector<double>>(static_cast<std::size_t>(b * plane), 0.0);
    double total = 0;
    std::int64_t counted = 0;
    std::vector<double> logits(static_cast<std::size_t>(n));
    for (std::int64_t bi = 0; bi < b; ++bi) {
      for (std::int64_t i = 0; i < plane; ++i) {
        double mx = -INFINITY;
        for (std::int64_t c = 0; c < n; ++c) {
          logits[static_cast<std::size_t>(c)] = static_cast<double>(s[(bi * n + c) * plane + i]);
          mx = std::max(mx, logits[static_cast<std::size_t>(c)]);
        }
        double z = 0;
        for (std::int64_t c = 0; c < n; ++c) {
          z += std::exp(logits[static_cast<std::size_t>(c)] - mx);
        }
        const double lse = mx + std::log(z);
        for (std::int64_t c = 0; c < n; ++c) {
          (*probs)[static_cast<std::size_t>((bi * n + c) * plane + i)] = std::exp(logits[static_cast<std::size_t>(c)] - lse);
        }
        const std::uint8_t t = target.values[static_cast<std::size_t>(bi * plane + i)];
        if (t == cfg.ignore_label) {
          continue;
        }
        const double alpha = cfg.alpha.empty() ? 1.0 : cfg.alpha[t];
        const double logp = logits[t] - lse;
        const double p = std::exp(logp);
        const double q = -std::expm1(logp);  // 1 - p without cancellation
        const double mod = cfg.gamma == 0 ? 1.0 : std::pow(q, cfg.gamma);
        total += -alpha * mod * logp;
        // d loss / d z_j = coeff * (p_j - [j == t])
        double dmod = 0;
        if (cfg.gamma != 0 && q > 0) {
          dmod = cfg.gamma * std::pow(q, cfg.gamma - 1) * p * logp;
        }
        (*coeff)[static_cast<std::size_t>(bi * plane + i)] = alpha * (mod - dmod);
        ++counted;
      }
    }
    const double denom = counted > 0 ? static_cast<double>(counted) : 1.0;
    Tensor out = Tensor::from_doubles({}, {total / denom}, scores.dtype());
    const LabelMap labels = target;
    const std::uint8_t ignore = cfg.ignore_label;
    return record(out, "focal_loss", {scores},
                  [probs, coeff, labels, ignore, b, n, plane, denom, dtype = scores.dtype()](const Tensor& g)
                      -> std::vector<Tensor> {
                    const double scale = g.item() / denom;
                    Tensor grad = Tensor::zeros({b, n, labels.height, labels.width}, dtype);
                    T* gd = grad.mutable_data<T>().data();
                    for (std::int64_t bi = 0; bi < b; ++bi) {
                      for (std::int64_t i = 0; i < plane; ++i) {
                        const std::uint8_t t = labels.values[static_cast<std::size_t>(bi * plane + i)];
                        if (t == ignore) {
                          continue;
                        }
                        const double k = scale * (*coeff)[static_cast<std::size_t>(bi * plane + i)];
                        for (std::int64_t c = 0; c < n; ++c) {
                          const std::size_t at = static_cast<std::size_t>((bi * n + c) * plane + i);
                          gd[at] = static_cast<T>(k * ((*probs)[at] - (c == t ? 1.0 : 0.0)));
                        }
                      }
                    }
                    return {grad};
                  });
  });
}

AdamState make_adam_state(const std::vector<NamedTensor>& params, const AdamConfig& cfg) {
  AdamState st;
  st.cfg = cfg;
  for (const auto& [name, p] : params) {
    st.names.push_back(name);
    st.m.push_back(Tensor::zeros(p.shape(), p.dtype()));
    st.v.push_back(Tensor::zeros(p.shape(), p.dtype()));
  }
  return st;
}

void adam_step(const std::vector<NamedTensor>& params, AdamState& state, double lr) {
  if (params.size() != state.names.size()) {
    throw ContractError("adam_step: state tracks " + std::to_string(state.names.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    if (name != state.names[i]) {
      throw ContractError("adam_step: parameter " + name + " where state expects " + state.names[i]);
    }
    if (p.requires_grad() && p.has_grad() && !all_finite(p.grad())) {
      throw NumericError("non-finite gradient in parameter " + name);
    }
  }
  ++state.step;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2, eps = state.cfg.epsilon;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].second;
    if (!p.requires_grad() || !p.has_grad()) {
      continue;
    }
    dispatch(p.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = p.grad_data<T>();
      auto x = p.mutable_data<T>();
      auto m = state.m[i].mutable_data<T>();
      auto v = state.v[i].mutable_data<T>();
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double gj = g[j];
        const double mj = b1 * m[j] + (1 - b1) * gj;
        const double vj = b2 * v[j] + (1 - b2) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        x[j] = static_cast<T>(x[j] - lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
      }
    });
  }
}

double lr_at_epoch(const LRSchedule& sched, int epoch) {
  if (sched.total_epochs < 1) {
    throw ContractError("schedule needs at least one epoch");
  }
  if (epoch < 0 || epoch >= sched.total_epochs) {
    throw ContractError("epoch " + std::to_string(epoch) + " outside schedule of " +
                        std::to_string(sched.total_epochs) + " epochs");
  }
  if (sched.total_epochs == 1) {
    return sched.max_lr;
  }
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / (sched.total_epochs - 1)));
  return sched.max_lr * w + sched.min_lr * (1.0 - w);
}

Sample augment_sample(const Sample& sample, const AugmentationConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool flip = u(rng) < cfg.flip_probability;
  const double angle = (2 * u(rng) - 1) * cfg.max_rotation_deg;
  const double bright = 1 + (2 * u(rng) - 1) * cfg.brightness;
  const double contrast = 1 + (2 * u(rng) - 1) * cfg.contrast;
  const double saturation = 1 + (2 * u(rng) - 1) * cfg.saturation;

  const Tensor src = sample.image.to(DType::f32);
  const int h = static_cast<int>(src.dim(1));
  const int w = static_cast<int>(src.dim(2));
  const float* px = src.data<float>().data();
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  cv::Mat img(h, w, CV_32FC3);
  cv::Mat mask(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y) {
    auto* row = img.ptr<cv::Vec3f>(y);
    auto* mrow = mask.ptr<std::uint8_t>(y);
    for (int x = 0; x < w; ++x) {
      const std::int64_t at = static_cast<std::int64_t>(y) * w + x;
      row[x] = cv::Vec3f(px[at], px[plane + at], px[2 * plane + at]);
      mrow[x] = sample.mask.at(0, y, x);
    }
  }
  if (flip) {
    cv::flip(img, img, 1);
    cv::flip(mask, mask, 1);
  }
  if (angle != 0.0) {
    const cv::Mat rot = cv::getRotationMatrix2D(cv::Point2f(0.5f * (w - 1), 0.5f * (h - 1)), angle, 1.0);
    cv::Mat img2, mask2;
    cv::warpAffine(img, img2, rot, img.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
    cv::warpAffine(mask, mask2, rot, mask.size(), cv::INTER_NEAREST, cv::BORDER_CONSTANT, cv::Scalar(kIgnoreLabel));
    img = img2;
    mask = mask2;
  }
  double gray_sum = 0;
  for (int y = 0; y < h; ++y) {
    const auto* row = img.ptr<cv::Vec3f>(y);
    for (int x = 0; x < w; ++x) {
      gray_sum += bright * (0.299 * row[x][0] + 0.587 * row[x][1] + 0.114 * row[x][2]);
    }
  }
  const double gray_mean = gray_sum / static_cast<double>(plane);

  Sample out;
  out.id = sample.id;
  out.image = Tensor::zeros({3, h, w});
  out.mask = LabelMap(1, h, w);
  float* dst = out.image.mutable_data<float>().data();
  for (int y = 0; y < h; ++y) {
    const auto* row = img.ptr<cv::Vec3f>(y);
    const auto* mrow = mask.ptr<std::uint8_t>(y);
    for (int x = 0; x < w; ++x) {
      double rgb[3];
      for (int c = 0; c < 3; ++c) {
        rgb[c] = (bright * row[x][c] - gray_mean) * contrast + gray_mean;
      }
      const double gray = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
      const std::int64_t at = static_cast<std::int64_t>(y) * w + x;
      for (int c = 0; c < 3; ++c) {
        dst[c * plane + at] = static_cast<float>(std::clamp(gray + (rgb[c] - gray) * saturation, 0.0, 1.0));
      }
      out.mask.at(0, y, x) = mrow[x];
    }
  }
  return out;
}

Checkpoint capture_checkpoint(const Module& model, const AdamState* adam, std::int64_t epoch, double val_iou,
                              const std::string& config) {
  Checkpoint c;
  for (const auto& [name, t] : model.named_state()) {
    c.model.emplace_back(name, t.detach().clone());
  }
  if (adam) {
    for (std::size_t i = 0; i < adam->names.size(); ++i) {
      c.optim_m.emplace_back(adam->names[i], adam->m[i].clone());
      c.optim_v.emplace_back(adam->names[i], adam->v[i].clone());
    }
    c.optim_step = adam->step;
  }
  c.epoch = epoch;
  c.val_iou = val_iou;
  c.config = config;
  return c;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'W', 'T', 'R'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kTagF32 = 0;
constexpr std::uint8_t kTagF64 = 1;
constexpr std::uint8_t kTagU8 = 2;

class Writer {
 public:
  template <typename U>
  void put(U v) {
    char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    buf_.append(b, sizeof(U));
  }
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }

  void entry(const std::string& name, std::uint8_t tag, const Shape& shape, const void* data, std::size_t n) {
    if (name.size() > 0xffff) {
      throw FormatError("tensor name too long: " + name.substr(0, 64) + "...");
    }
    put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    bytes(name.data(), name.size());
    put<std::uint8_t>(tag);
    put<std::uint8_t>(static_cast<std::uint8_t>(shape.size()));
    for (std::int64_t d : shape) {
      put<std::uint32_t>(static_cast<std::uint32_t>(d));
    }
    bytes(data, n);
    ++count_;
  }
  void tensor(const std::string& name, const Tensor& t) {
    dispatch(t.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const auto d = t.data<T>();
      entry(name, t.dtype() == DType::f32 ? kTagF32 : kTagF64, t.shape(), d.data(), d.size_bytes());
    });
  }
  void scalar(const std::string& name, double v) { entry(name, kTagF64, {}, &v, sizeof v); }
  void text(const std::string& name, const std::string& s) {
    entry(name, kTagU8, {static_cast<std::int64_t>(s.size())}, s.data(), s.size());
  }
  std::string finish() const {
    std::string head(kMagic, 4);
    char v[4];
    std::memcpy(v, &kVersion, 4);
    head.append(v, 4);
    std::memcpy(v, &count_, 4);
    head.append(v, 4);
    return head + buf_;
  }

 private:
  std::string buf_;
  std::uint32_t count_ = 0;
};

struct RawEntry {
  std::uint8_t tag = 0;
  Shape shape;
  std::string bytes;
};

class Reader {
 public:
  Reader(const std::string& buf, std::string origin) : buf_(buf), origin_(std::move(origin)) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) {
      throw FormatError(origin_ + ": truncated at byte " + std::to_string(pos_));
    }
  }
  const std::string& buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

Tensor to_tensor(const std::string& name, const RawEntry& e) {
  const std::int64_t n = shape_numel(e.shape);
  if (e.tag == kTagF32) {
    std::vector<float> v(static_cast<std::size_t>(n));
    std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
    return Tensor::from(e.shape, std::move(v));
  }
  if (e.tag == kTagF64) {
    std::vector<double> v(static_cast<std::size_t>(n));
    std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
    return Tensor::from(e.shape, std::move(v));
  }
  throw FormatError("entry " + name + " is not a floating-point tensor");
}

double to_scalar(const std::string& name, const RawEntry& e) {
  if (e.tag != kTagF64 || !e.shape.empty()) {
    throw FormatError("entry " + name + " is not a 64-bit scalar");
  }
  double v;
  std::memcpy(&v, e.bytes.data(), sizeof v);
  return v;
}

}  // namespace

void checkpoint_save(const Checkpoint& ckpt, const fs::path& path) {
  Writer w;
  for (const auto& [name, t] : ckpt.model) {
    w.tensor("model/" + name, t);
  }
  for (const auto& [name, t] : ckpt.optim_m) {
    w.tensor("optim/m/" + name, t);
  }
  for (const auto& [name, t] : ckpt.optim_v) {
    w.tensor("optim/v/" + name, t);
  }
  w.scalar("optim/step", static_cast<double>(ckpt.optim_step));
  w.scalar("meta/epoch", static_cast<double>(ckpt.epoch));
  w.scalar("meta/val_iou", ckpt.val_iou);
  w.text("meta/config", ckpt.config);
  const std::string bytes = w.finish();
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
      throw DataError("cannot write checkpoint " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw DataError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
  }
}

Checkpoint checkpoint_load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot read checkpoint " + path.string());
  }
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(buf, path.string());
  if (r.take(4) != std::string(kMagic, 4)) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<std::pair<std::string, RawEntry>> entries;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string name = r.take(len);
    if (name.empty() || !names.insert(name).second) {
      throw FormatError(path.string() + ": empty or duplicate entry name at index " + std::to_string(i));
    }
    RawEntry e;
    e.tag = r.get<std::uint8_t>();
    const auto rank = r.get<std::uint8_t>();
    std::size_t width = 0;
    switch (e.tag) {
      case kTagF32:
        width = 4;
        break;
      case kTagF64:
        width = 8;
        break;
      case kTagU8:
        width = 1;
        break;
      default:
        throw FormatError(path.string() + ": entry " + name + " has unknown dtype tag " + std::to_string(e.tag));
    }
    for (int d = 0; d < rank; ++d) {
      e.shape.push_back(r.get<std::uint32_t>());
    }
    e.bytes = r.take(static_cast<std::size_t>(shape_numel(e.shape)) * width);
    entries.emplace_back(std::move(name), std::move(e));
  }
  if (!r.done()) {
    throw FormatError(path.string() + ": trailing bytes after " + std::to_string(count) + " entries");
  }
  Checkpoint c;
  bool have_step = false, have_epoch = false, have_iou = false;
  for (const auto& [name, e] : entries) {
    if (name.rfind("model/", 0) == 0) {
      c.model.emplace_back(name.substr(6), to_tensor(name, e));
    } else if (name.rfind("optim/m/", 0) == 0) {
      c.optim_m.emplace_back(name.substr(8), to_tensor(name, e));
    } else if (name.rfind("optim/v/", 0) == 0) {
      c.optim_v.emplace_back(name.substr(8), to_tensor(name, e));
    } else if (name == "optim/step") {
      c.optim_step = static_cast<std::int64_t>(to_scalar(name, e));
      have_step = true;
    } else if (name == "meta/epoch") {
      c.epoch = static_cast<std::int64_t>(to_scalar(name, e));
      have_epoch = true;
    } else if (name == "meta/val_iou") {
      c.val_iou = to_scalar(name, e);
      have_iou = true;
    } else if (name == "meta/config") {
      if (e.tag != kTagU8) {
        throw FormatError(path.string() + ": meta/config is not text");
      }
      c.config = e.bytes;
    } else {
      throw FormatError(path.string() + ": unexpected entry " + name);
    }
  }
  if (!have_step || !have_epoch || !have_iou) {
    throw FormatError(path.string() + ": missing metadata entries");
  }
  return c;
}

void load_model_state(Module& model, const Checkpoint& ckpt) {
  std::map<std::string, const Tensor*> stored;
  for (const auto& [name, t] : ckpt.model) {
    stored[name] = &t;
  }
  std::vector<std::string> missing, mismatched;
  std::set<std::string> used;
  const auto state = model.named_state();
  for (const auto& [name, t] : state) {
    auto it = stored.find(name);
    if (it == stored.end()) {
      missing.push_back(name);
    } else if (it->second->shape() != t.shape()) {
      mismatched.push_back(name + " (checkpoint " + shape_str(it->second->shape()) + ", model " +
                           shape_str(t.shape()) + ")");
    }
    used.insert(name);
  }
  std::vector<std::string> unexpected;
  for (const auto& [name, t] : stored) {
    if (!used.count(name)) {
      unexpected.push_back(name);
    }
  }
  if (!missing.empty() || !mismatched.empty() || !unexpected.empty()) {
    std::string msg = "checkpoint does not match the model architecture";
    auto list = [&msg](const char* what, const std::vector<std::string>& names) {
      if (names.empty()) return;
      msg += std::string("; ") + what + ":";
      for (const auto& n : names) msg += " " + n;
    };
    list("missing tensors", missing);
    list("shape mismatches", mismatched);
    list("unexpected tensors", unexpected);
    throw FormatError(msg);
  }
  for (const auto& [name, t] : state) {
    Tensor dst = t;
    dst.copy_from(stored.at(name)->to(dst.dtype()));
  }
}

void load_adam_state(AdamState& state, const Checkpoint& ckpt) {
  if (ckpt.optim_m.size() != state.names.size() || ckpt.optim_v.size() != state.names.size()) {
    throw FormatError("checkpoint optimizer state covers " + std::to_string(ckpt.optim_m.size()) +
                      " parameters, model has " + std::to_string(state.names.size()));
  }
  for (std::size_t i = 0; i < state.names.size(); ++i) {
    if (ckpt.optim_m[i].first != state.names[i] || ckpt.optim_v[i].first != state.names[i]) {
      throw FormatError("checkpoint optimizer state lacks parameter " + state.names[i]);
    }
    state.m[i].copy_from(ckpt.optim_m[i].second.to(state.m[i].dtype()));
    state.v[i].copy_from(ckpt.optim_v[i].second.to(state.v[i].dtype()));
  }
  state.step = ckpt.optim_step;
}

std::string format_log_line(const EpochRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d\t%.6e\t%.8f\t%.8f\n", r.epoch, r.lr, r.train_loss, r.val_iou);
  return buf;
}

namespace {

DType model_dtype(const Module& model) {
  const auto params = model.named_parameters();
  return params.empty() ? DType::f32 : params.front().second.dtype();
}

void check_samples(const std::vector<Sample>& samples, int size, const char* what) {
  for (const Sample& s : samples) {
    if (s.image.rank() != 3 || s.image.dim(0) != 3 || s.image.dim(1) != size || s.image.dim(2) != size ||
        s.mask.height != size || s.mask.width != size) {
      throw DataError(std::string(what) + " sample " + s.id + " is not at the model resolution " +
                      std::to_string(size) + "x" + std::to_string(size));
    }
  }
}

Sample shrink_sample(const Sample& s, int size) {
  Sample out;
  out.id = s.id;
  const Tensor img = reshape(s.image, {1, 3, s.image.dim(1), s.image.dim(2)});
  out.image = reshape(bilinear_resize(img, size, size), {3, size, size});
  out.mask = resize_labels_nearest(s.mask, size, size);
  return out;
}

}  // namespace

ConfusionMatrix evaluate_samples(SwinTRModel& model, const std::vector<Sample>& samples, int batch_size) {
  if (batch_size < 1) {
    throw ConfigError("evaluation batch size must be >= 1");
  }
  check_samples(samples, model.external_resolution(), "evaluation");
  NoGradGuard no_grad;
  const bool was_training = model.training();
  model.train(false);
  const DType dtype = model_dtype(model);
  ConfusionMatrix cm(model.classes());
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const Sample*> batch;
    std::vector<const LabelMap*> masks;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(&samples[i]);
      masks.push_back(&samples[i].mask);
    }
    const Tensor scores = model.forward(stack_images(batch).to(dtype));
    cm.accumulate(argmax_labels(scores), stack_labels(masks));
  }
  model.train(was_training);
  return cm;
}

MetricsReport evaluate_dataset(SwinTRModel& model, const std::vector<Record>& records,
                               const std::vector<std::string>& class_names, int batch_size) {
  if (records.empty()) {
    throw ConfigError("evaluation split is empty");
  }
  if (batch_size < 1) {
    throw ConfigError("evaluation batch size must be >= 1");
  }
  ConfusionMatrix cm(model.classes());
  for (std::size_t start = 0; start < records.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(records.size(), start + static_cast<std::size_t>(batch_size));
    const std::vector<Record> chunk(records.begin() + static_cast<std::ptrdiff_t>(start),
                                    records.begin() + static_cast<std::ptrdiff_t>(end));
    cm.merge(evaluate_samples(model, load_samples(chunk, model.classes(), model.external_resolution()), batch_size));
  }
  return make_report(cm, class_names);
}

TrainResult train_loop(SwinTRModel& model, const std::vector<Sample>& train, const std::vector<Sample>& val,
                       const TrainConfig& cfg, std::ostream* log_sink) {
  if (train.empty()) {
    throw ConfigError("training set is empty");
  }
  if (val.empty()) {
    throw ConfigError("validation set is empty");
  }
  if (cfg.batch_size < 1) {
    throw ConfigError("batch size must be >= 1");
  }
  const int epochs = cfg.schedule.total_epochs;
  if (epochs < 1) {
    throw ConfigError("training needs at least one epoch");
  }
  if (cfg.pretrain_epochs < 0 || cfg.pretrain_epochs > epochs) {
    throw ConfigError("pretrain epochs must lie in [0, epochs]");
  }
  const int size = model.external_resolution();
  check_samples(train, size, "training");
  check_samples(val, size, "validation");

  if (cfg.freeze_resizers) {
    model.downsampler().set_requires_grad(false);
    model.upsampler().set_requires_grad(false);
  }
  const auto params = model.named_parameters();
  AdamState adam = make_adam_state(params, cfg.adam);
  std::mt19937_64 rng(cfg.seed);
  const DType dtype = model_dtype(model);

  std::vector<Sample> shrunk;
  if (cfg.pretrain_epochs > 0) {
    const int internal = model.internal().image_size();
    for (const Sample& s : train) {
      shrunk.push_back(shrink_sample(s, internal));
    }
  }

  TrainResult result;
  result.best = capture_checkpoint(model, &adam, -1, 0.0, cfg.config_text);
  bool have_best = false;
  std::vector<std::size_t> order(train.size());
  for (int epoch = 0; epoch < epochs && !result.halted; ++epoch) {
    const double lr = lr_at_epoch(cfg.schedule, epoch);
    const bool pretraining = epoch < cfg.pretrain_epochs;
    const std::vector<Sample>& data = pretraining ? shrunk : train;
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    model.train(true);
    double loss_sum = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Sample> augmented;
      augmented.reserve(end - start);
      std::vector<const Sample*> batch;
      std::vector<const LabelMap*> masks;
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = data[order[i]];
        if (cfg.augmentation.enabled) {
          augmented.push_back(augment_sample(s, cfg.augmentation, rng));
          batch.push_back(&augmented.back());
        } else {
          batch.push_back(&s);
        }
        masks.push_back(&batch.back()->mask);
      }
      model.zero_grad();
      const Tensor x = stack_images(batch).to(dtype);
      const Tensor scores = pretraining ? model.internal().forward(x) : model.forward(x);
      const Tensor loss = focal_loss(scores, stack_labels(masks), cfg.focal);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        result.halted = true;
        result.halt_reason = "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches);
        break;
      }
      backward(loss);
      try {
        adam_step(params, adam, lr);
      } catch (const NumericError& e) {
        result.halted = true;
        result.halt_reason = std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches);
        break;
      }
      loss_sum += value;
      ++batches;
    }
    if (result.halted) {
      break;
    }
    const double iou = mean_iou(evaluate_samples(model, val, cfg.eval_batch_size));
    const EpochRecord rec{epoch, lr, loss_sum / batches, iou};
    result.log.push_back(rec);
    if (log_sink) {
      *log_sink << format_log_line(rec) << std::flush;
    }
    if (!have_best || iou > result.best.val_iou) {
      result.best = capture_checkpoint(model, &adam, epoch, iou, cfg.config_text);
      have_best = true;
    }
  }
  model.zero_grad();
  if (cfg.freeze_resizers) {
    model.downsampler().set_requires_grad(true);
    model.upsampler().set_requires_grad(true);
  }
  return result;
}

}  // namespace swintr
