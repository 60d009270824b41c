#include "swintr/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "swintr/errors.hpp"
#include "swintr/ops.hpp"

namespace fs = std::filesystem;

namespace swintr {

int ClassMap::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw ConfigError("unknown class name '" + name + "'");
  }
  return static_cast<int>(it - names.begin());
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw DataError("unknown split '" + name + "' (expected train, val or test)");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

std::vector<Record> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot read manifest " + path.string());
  }
  const fs::path base = path.parent_path();
  std::vector<Record> records;
  std::set<fs::path> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) {
      fields.push_back(field);
    }
    if (fields.size() != 3) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                      std::to_string(fields.size()));
    }
    Record r;
    r.image = fs::path(fields[0]).is_absolute() ? fs::path(fields[0]) : base / fields[0];
    r.mask = fs::path(fields[1]).is_absolute() ? fs::path(fields[1]) : base / fields[1];
    try {
      r.split = parse_split(fields[2]);
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(r.image.lexically_normal()).second || !seen.insert(r.mask.lexically_normal()).second) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": duplicate path");
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_manifest(const fs::path& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write manifest " + path.string());
  }
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) {
    const fs::path r = p.lexically_relative(base);
    return (r.empty() || *r.begin() == "..") ? p.generic_string() : r.generic_string();
  };
  for (const Record& r : records) {
    out << rel(r.image) << '\t' << rel(r.mask) << '\t' << split_name(r.split) << '\n';
  }
}

std::vector<Record> filter_split(const std::vector<Record>& records, Split split) {
  std::vector<Record> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [split](const Record& r) { return r.split == split; });
  return out;
}

namespace {

cv::Mat read_rgb(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw DataError("cannot read image " + path.string());
  }
  return bgr;
}

Tensor rgb_tensor(const cv::Mat& bgr) {
  const std::int64_t h = bgr.rows;
  const std::int64_t w = bgr.cols;
  Tensor t = Tensor::zeros({3, h, w});
  float* px = t.mutable_data<float>().data();
  for (std::int64_t y = 0; y < h; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(static_cast<int>(y));
    for (std::int64_t x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        px[(c * h + y) * w + x] = static_cast<float>(row[x][2 - c]) / 255.0f;
      }
    }
  }
  return t;
}

cv::Mat bgr_mat(const Tensor& image) {
  Tensor t = image.to(DType::f32);
  if (t.rank() == 4 && t.dim(0) == 1) {
    t = reshape(t, {t.dim(1), t.dim(2), t.dim(3)});
  }
  if (t.rank() != 3 || t.dim(0) != 3) {
    throw DimensionError("expected an RGB image [3,H,W], got " + shape_str(image.shape()));
  }
  const int h = static_cast<int>(t.dim(1));
  const int w = static_cast<int>(t.dim(2));
  const float* px = t.data<float>().data();
  cv::Mat out(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    auto* row = out.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(px[(static_cast<std::int64_t>(c) * h + y) * w + x], 0.0f, 1.0f);
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(255.0f * v));
      }
    }
  }
  return out;
}

void write_png(const fs::path& path, const cv::Mat& m) {
  if (!cv::imwrite(path.string(), m)) {
    throw DataError("cannot write " + path.string());
  }
}

}  // namespace

Tensor load_image(const fs::path& path, std::optional<int> target_size) {
  const cv::Mat bgr = read_rgb(path);
  Tensor t = reshape(rgb_tensor(bgr), {1, 3, bgr.rows, bgr.cols});
  if (target_size) {
    if (*target_size <= 0) {
      throw ConfigError("target size must be positive");
    }
    t = bilinear_resize(t, *target_size, *target_size);
  }
  return t;
}

void write_image(const fs::path& path, const Tensor& image) { write_png(path, bgr_mat(image)); }

void write_label_map(const fs::path& path, const LabelMap& labels) {
  if (labels.batch != 1) {
    throw DimensionError("write_label_map expects a single map");
  }
  cv::Mat m(static_cast<int>(labels.height), static_cast<int>(labels.width), CV_8UC1,
            const_cast<std::uint8_t*>(labels.values.data()));
  write_png(path, m);
}

void write_label_colors(const fs::path& path, const LabelMap& labels, const Tensor& image) {
  if (labels.batch != 1) {
    throw DimensionError("write_label_colors expects a single map");
  }
  static const cv::Vec3b palette[] = {{0, 0, 0},     {200, 200, 200}, {220, 120, 40}, {40, 140, 240},
                                      {60, 200, 60}, {200, 60, 200},  {60, 200, 200}, {200, 200, 60}};
  const int h = static_cast<int>(labels.height);
  const int w = static_cast<int>(labels.width);
  cv::Mat out(h, w, CV_8UC3);
  cv::Mat base;
  if (image.defined()) {
    base = bgr_mat(image);
    if (base.rows != h || base.cols != w) {
      throw DimensionError("overlay image extents differ from the label map");
    }
  }
  for (int y = 0; y < h; ++y) {
    auto* row = out.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      const std::uint8_t v = labels.at(0, y, x);
      cv::Vec3b color = v == kIgnoreLabel ? cv::Vec3b(255, 255, 255) : palette[v % 8];
      if (!base.empty()) {
        const cv::Vec3b& b = base.at<cv::Vec3b>(y, x);
        for (int c = 0; c < 3; ++c) {
          color[c] = static_cast<std::uint8_t>((b[c] + color[c] + 1) / 2);
        }
      }
      row[x] = color;
    }
  }
  write_png(path, out);
}

Sample load_sample(const Record& record, int classes, std::optional<int> target_size) {
  const cv::Mat bgr = read_rgb(record.image);
  cv::Mat mask = cv::imread(record.mask.string(), cv::IMREAD_UNCHANGED);
  if (mask.empty()) {
    throw DataError("cannot read mask " + record.mask.string());
  }
  if (mask.type() != CV_8UC1) {
    throw DataError("mask " + record.mask.string() + " is not single-channel 8-bit");
  }
  if (mask.rows != bgr.rows || mask.cols != bgr.cols) {
    throw DataError("mask " + record.mask.string() + " is " + std::to_string(mask.cols) + "x" +
                    std::to_string(mask.rows) + " but image is " + std::to_string(bgr.cols) + "x" +
                    std::to_string(bgr.rows));
  }
  const std::int64_t h = bgr.rows;
  const std::int64_t w = bgr.cols;
  Sample s;
  s.id = record.image.string();
  s.image = rgb_tensor(bgr);
  s.mask = LabelMap(1, h, w);
  for (std::int64_t y = 0; y < h; ++y) {
    const auto* row = mask.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::int64_t x = 0; x < w; ++x) {
      const std::uint8_t v = row[x];
      if (v != kIgnoreLabel && v >= classes) {
        throw DataError("mask " + record.mask.string() + " has value " + std::to_string(v) + " at (x=" +
                        std::to_string(x) + ", y=" + std::to_string(y) + ") outside " + std::to_string(classes) +
                        " classes");
      }
      s.mask.at(0, y, x) = v;
    }
  }
  if (target_size) {
    const int t = *target_size;
    if (t <= 0) {
      throw ConfigError("target size must be positive");
    }
    s.image = reshape(bilinear_resize(reshape(s.image, {1, 3, h, w}), t, t), {3, t, t});
    s.mask = resize_labels_nearest(s.mask, t, t);
  }
  return s;
}

std::vector<Sample> load_samples(const std::vector<Record>& records, int classes, std::optional<int> target_size) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const Record& r : records) {
    out.push_back(load_sample(r, classes, target_size));
  }
  return out;
}

Tensor stack_images(const std::vector<const Sample*>& samples) {
  if (samples.empty()) {
    throw ContractError("stack_images: no samples");
  }
  const Shape one = samples.front()->image.shape();
  Tensor out = Tensor::zeros({static_cast<std::int64_t>(samples.size()), one[0], one[1], one[2]});
  float* dst = out.mutable_data<float>().data();
  const std::int64_t n = shape_numel(one);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i]->image.shape() != one) {
      throw DimensionError("stack_images: " + samples[i]->id + " has shape " + shape_str(samples[i]->image.shape()) +
                           ", expected " + shape_str(one));
    }
    const Tensor img = samples[i]->image.to(DType::f32);
    std::copy_n(img.data<float>().data(), n, dst + static_cast<std::int64_t>(i) * n);
  }
  return out;
}

std::vector<Record> split_dataset(const std::vector<Record>& records, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in (0,1), got " + std::to_string(val_fraction));
  }
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == Split::train) {
      train.push_back(i);
    }
  }
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(train.size())));
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first n_val entries become the validation set.
  for (std::size_t i = 0; i < n_val; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, train.size() - 1);
    std::swap(train[i], train[pick(rng)]);
  }
  std::vector<Record> out = records;
  for (std::size_t i = 0; i < n_val; ++i) {
    out[train[i]].split = Split::val;
  }
  return out;
}

SynthStyle parse_synth_style(const std::string& name) {
  if (name == "shapes") return SynthStyle::shapes;
  if (name == "thin_bars") return SynthStyle::thin_bars;
  throw ConfigError("unknown synthetic style '" + name + "' (expected shapes or thin_bars)");
}

const char* synth_style_name(SynthStyle s) { return s == SynthStyle::shapes ? "shapes" : "thin_bars"; }

namespace {

struct Palette {
  cv::Vec3f base;  // RGB
  int pattern;     // 0 blotches, 1 speckle, 2 horizontal stripes, 3 vertical corrugation
};

Palette palette_for(int c) {
  static const Palette fixed[] = {
      {{0.25f, 0.35f, 0.20f}, 0},
      {{0.66f, 0.65f, 0.62f}, 1},
      {{0.30f, 0.42f, 0.72f}, 2},
      {{0.78f, 0.46f, 0.18f}, 3},
  };
  if (c < 4) {
    return fixed[c];
  }
  const float hue = static_cast<float>(c) * 0.61803f;
  const auto ch = [&](float phase) { return 0.45f + 0.3f * std::sin(6.2832f * (hue + phase)); };
  return {{ch(0.0f), ch(0.33f), ch(0.67f)}, c % 4};
}

float texture(int pattern, int x, int y, float phase) {
  switch (pattern) {
    case 0:
      return 0.06f * std::sin(0.05f * static_cast<float>(x) + phase) * std::cos(0.07f * static_cast<float>(y) - phase);
    case 2:
      return 0.08f * std::sin(0.8f * static_cast<float>(y) + phase);
    case 3:
      return 0.10f * std::sin(0.6f * static_cast<float>(x) + phase);
    default:
      return 0.0f;
  }
}

struct Canvas {
  cv::Mat labels;  // CV_8UC1
  int size;
};

void draw_bar(Canvas& cv_, std::mt19937_64& rng, int cls, int min_thick, int max_thick, double min_len, double max_len) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> thick(min_thick, max_thick);
  const double s = cv_.size;
  const double len = s * (min_len + (max_len - min_len) * u(rng));
  const double angle = std::numbers::pi * u(rng);
  const double cx = s * (0.1 + 0.8 * u(rng));
  const double cy = s * (0.1 + 0.8 * u(rng));
  const cv::Point a(static_cast<int>(cx - 0.5 * len * std::cos(angle)), static_cast<int>(cy - 0.5 * len * std::sin(angle)));
  const cv::Point b(static_cast<int>(cx + 0.5 * len * std::cos(angle)), static_cast<int>(cy + 0.5 * len * std::sin(angle)));
  cv::line(cv_.labels, a, b, cv::Scalar(cls), thick(rng), cv::LINE_8);
}

void draw_blob(Canvas& cv_, std::mt19937_64& rng, int cls, double min_extent, double max_extent) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = cv_.size;
  const int w = static_cast<int>(s * (min_extent + (max_extent - min_extent) * u(rng)));
  const int h = static_cast<int>(s * (min_extent + (max_extent - min_extent) * u(rng)));
  const int x = static_cast<int>((s - w) * u(rng));
  const int y = static_cast<int>((s - h) * u(rng));
  if (u(rng) < 0.6) {
    cv::rectangle(cv_.labels, cv::Rect(x, y, w, h), cv::Scalar(cls), cv::FILLED, cv::LINE_8);
  } else {
    cv::ellipse(cv_.labels, cv::Point(x + w / 2, y + h / 2), cv::Size(w / 2, h / 2), 180.0 * u(rng), 0, 360,
                cv::Scalar(cls), cv::FILLED, cv::LINE_8);
  }
}

cv::Mat render(const cv::Mat& labels, int classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::normal_distribution<float> noise(0.0f, 1.0f);
  std::vector<Palette> pal;
  std::vector<float> phase;
  for (int c = 0; c < classes; ++c) {
    pal.push_back(palette_for(c));
    phase.push_back(6.2832f * u(rng));
  }
  const float gain = 0.9f + 0.2f * u(rng);
  cv::Mat img(labels.size(), CV_8UC3);
  for (int y = 0; y < labels.rows; ++y) {
    const auto* lab = labels.ptr<std::uint8_t>(y);
    auto* out = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < labels.cols; ++x) {
      const int c = lab[x];
      const Palette& p = pal[static_cast<std::size_t>(c)];
      const float sigma = p.pattern == 1 ? 0.07f : 0.03f;
      const float t = texture(p.pattern, x, y, phase[static_cast<std::size_t>(c)]) + sigma * noise(rng);
      for (int k = 0; k < 3; ++k) {
        const float v = std::clamp(gain * p.base[k] + t, 0.0f, 1.0f);
        out[x][2 - k] = static_cast<std::uint8_t>(std::lround(255.0f * v));
      }
    }
  }
  return img;
}

cv::Mat compose(SynthStyle style, int size, int classes, std::mt19937_64& rng) {
  Canvas c{cv::Mat(size, size, CV_8UC1, cv::Scalar(0)), size};
  std::uniform_int_distribution<int> cls(1, classes - 1);
  if (style == SynthStyle::shapes) {
    std::uniform_int_distribution<int> blobs(4, 7);
    std::uniform_int_distribution<int> bars(2, 4);
    for (int i = blobs(rng); i > 0; --i) {
      draw_blob(c, rng, cls(rng), 0.12, 0.35);
    }
    for (int i = bars(rng); i > 0; --i) {
      draw_bar(c, rng, cls(rng), 1, 3, 0.3, 0.6);
    }
  } else {
    std::uniform_int_distribution<int> blobs(1, 2);
    std::uniform_int_distribution<int> bars(18, 26);
    for (int i = blobs(rng); i > 0; --i) {
      draw_blob(c, rng, cls(rng), 0.08, 0.18);
    }
    for (int i = bars(rng); i > 0; --i) {
      draw_bar(c, rng, cls(rng), 1, 3, 0.5, 0.9);
    }
  }
  return c.labels;
}

}  // namespace

SynthSummary synth_dataset_generate(const fs::path& dir, const SynthConfig& cfg) {
  if (cfg.classes < 2 || cfg.classes > 255) {
    throw ConfigError("synthetic data needs 2..255 classes");
  }
  if (cfg.size < 32) {
    throw ConfigError("synthetic image size must be at least 32");
  }
  if (cfg.train < 0 || cfg.val < 0 || cfg.test < 0 || cfg.train + cfg.val + cfg.test == 0) {
    throw ConfigError("synthetic data needs a positive sample count");
  }
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "masks", ec);
  if (ec) {
    throw DataError("cannot create " + dir.string() + ": " + ec.message());
  }
  SynthSummary summary;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(cfg.classes), 0);
  std::int64_t total = 0;
  std::mt19937_64 rng(cfg.seed);
  const std::pair<Split, int> plan[] = {{Split::train, cfg.train}, {Split::val, cfg.val}, {Split::test, cfg.test}};
  for (auto [split, count] : plan) {
    for (int i = 0; i < count; ++i) {
      char stem[64];
      std::snprintf(stem, sizeof stem, "%s_%05d.png", split_name(split), i);
      const cv::Mat labels = compose(cfg.style, cfg.size, cfg.classes, rng);
      const cv::Mat image = render(labels, cfg.classes, rng);
      Record r{dir / "images" / stem, dir / "masks" / stem, split};
      if (!cv::imwrite(r.image.string(), image) || !cv::imwrite(r.mask.string(), labels)) {
        throw DataError("cannot write sample " + r.image.string());
      }
      for (int y = 0; y < labels.rows; ++y) {
        const auto* row = labels.ptr<std::uint8_t>(y);
        for (int x = 0; x < labels.cols; ++x) {
          ++counts[row[x]];
        }
      }
      total += static_cast<std::int64_t>(labels.total());
      summary.records.push_back(std::move(r));
    }
  }
  for (int c = 0; c < cfg.classes; ++c) {
    const double f = static_cast<double>(counts[static_cast<std::size_t>(c)]) / static_cast<double>(total);
    summary.class_fraction.push_back(f);
    if (f < 0.01) {
      throw DataError("synthetic class " + std::to_string(c) + " covers only " + std::to_string(100 * f) +
                      "% of pixels (needs at least 1%)");
    }
  }
  summary.manifest = dir / "manifest.tsv";
  write_manifest(summary.manifest, summary.records);
  return summary;
}

}  // namespace swintr
