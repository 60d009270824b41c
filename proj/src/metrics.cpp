#include "swintr/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include "swintr/errors.hpp"

namespace swintr {

LabelMap stack_labels(const std::vector<const LabelMap*>& maps) {
  if (maps.empty()) {
    throw ContractError("stack_labels: no maps");
  }
  const LabelMap& first = *maps.front();
  LabelMap out;
  out.height = first.height;
  out.width = first.width;
  out.batch = 0;
  for (const LabelMap* m : maps) {
    if (m->height != first.height || m->width != first.width) {
      throw DimensionError("stack_labels: extents differ");
    }
    out.values.insert(out.values.end(), m->values.begin(), m->values.end());
    out.batch += m->batch;
  }
  return out;
}

LabelMap resize_labels_nearest(const LabelMap& labels, std::int64_t height, std::int64_t width) {
  if (height <= 0 || width <= 0) {
    throw DimensionError("resize_labels_nearest: target extents must be positive");
  }
  if (height == labels.height && width == labels.width) {
    return labels;
  }
  LabelMap out(labels.batch, height, width);
  const double sy = static_cast<double>(labels.height) / static_cast<double>(height);
  const double sx = static_cast<double>(labels.width) / static_cast<double>(width);
  std::vector<std::int64_t> xs(static_cast<std::size_t>(width));
  for (std::int64_t x = 0; x < width; ++x) {
    xs[static_cast<std::size_t>(x)] =
        std::min(labels.width - 1, static_cast<std::int64_t>((static_cast<double>(x) + 0.5) * sx));
  }
  for (std::int64_t b = 0; b < labels.batch; ++b) {
    for (std::int64_t y = 0; y < height; ++y) {
      const std::int64_t src_y = std::min(labels.height - 1, static_cast<std::int64_t>((static_cast<double>(y) + 0.5) * sy));
      for (std::int64_t x = 0; x < width; ++x) {
        out.at(b, y, x) = labels.at(b, src_y, xs[static_cast<std::size_t>(x)]);
      }
    }
  }
  return out;
}

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
  if (classes < 1 || classes > 255) {
    throw ConfigError("confusion matrix needs 1..255 classes, got " + std::to_string(classes));
  }
  counts_.assign(static_cast<std::size_t>(classes) * static_cast<std::size_t>(classes), 0);
}

void ConfusionMatrix::accumulate(const LabelMap& predicted, const LabelMap& truth) {
  if (!predicted.same_extents(truth) || predicted.values.size() != truth.values.size()) {
    throw DimensionError("confusion accumulate: prediction " + std::to_string(predicted.batch) + "x" +
                         std::to_string(predicted.height) + "x" + std::to_string(predicted.width) + " vs truth " +
                         std::to_string(truth.batch) + "x" + std::to_string(truth.height) + "x" +
                         std::to_string(truth.width));
  }
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    const int t = truth.values[i];
    if (t == kIgnoreLabel) {
      continue;
    }
    const int p = predicted.values[i];
    if (t >= classes_ || p >= classes_) {
      throw DataError("confusion accumulate: label out of range at flat index " + std::to_string(i) + " (truth " +
                      std::to_string(t) + ", prediction " + std::to_string(p) + ")");
    }
    ++counts_[static_cast<std::size_t>(t * classes_ + p)];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) {
    throw DimensionError("confusion merge: class counts differ");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    counts_[i] += other.counts_[i];
  }
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::false_positives(int c) const {
  std::int64_t s = 0;
  for (int t = 0; t < classes_; ++t) {
    s += count(t, c);
  }
  return s - count(c, c);
}

std::int64_t ConfusionMatrix::false_negatives(int c) const {
  std::int64_t s = 0;
  for (int p = 0; p < classes_; ++p) {
    s += count(c, p);
  }
  return s - count(c, c);
}

ClassMetrics metrics_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  if (tp + fp + fn == 0) {
    return {1.0, 1.0, 1.0, 1.0};
  }
  const auto ratio = [](std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  ClassMetrics m;
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  m.iou = ratio(tp, tp + fp + fn);
  return m;
}

ClassMetrics class_metrics(const ConfusionMatrix& cm, int c) {
  if (c < 0 || c >= cm.classes()) {
    throw ContractError("class_metrics: class " + std::to_string(c) + " out of range");
  }
  return metrics_from_counts(cm.true_positives(c), cm.false_positives(c), cm.false_negatives(c));
}

double macro_average(const std::vector<double>& values) {
  if (values.empty()) {
    throw ContractError("macro_average of an empty class list");
  }
  double s = 0;
  for (double v : values) {
    s += v;
  }
  return s / static_cast<double>(values.size());
}

MetricsReport make_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
  if (static_cast<int>(class_names.size()) != cm.classes()) {
    throw ConfigError("report: " + std::to_string(class_names.size()) + " class names for " +
                      std::to_string(cm.classes()) + " classes");
  }
  MetricsReport r;
  r.class_names = class_names;
  std::vector<double> p, rc, f, iou;
  for (int c = 0; c < cm.classes(); ++c) {
    const ClassMetrics m = class_metrics(cm, c);
    r.per_class.push_back(m);
    p.push_back(m.precision);
    rc.push_back(m.recall);
    f.push_back(m.f1);
    iou.push_back(m.iou);
  }
  r.average = {macro_average(p), macro_average(rc), macro_average(f), macro_average(iou)};
  return r;
}

double mean_iou(const ConfusionMatrix& cm) {
  std::vector<double> iou;
  for (int c = 0; c < cm.classes(); ++c) {
    iou.push_back(class_metrics(cm, c).iou);
  }
  return macro_average(iou);
}

std::string format_report(const MetricsReport& report) {
  std::ostringstream os;
  auto row = [&os](const std::string& name, const ClassMetrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s %10.2f %10.2f %10.2f %10.2f\n", name.c_str(), 100 * m.precision,
                  100 * m.recall, 100 * m.f1, 100 * m.iou);
    os << buf;
  };
  char head[160];
  std::snprintf(head, sizeof head, "%-16s %10s %10s %10s %10s\n", "class", "Precision", "Recall", "F1-score", "IoU");
  os << head;
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    row(report.class_names[c], report.per_class[c]);
  }
  row("average", report.average);
  return os.str();
}

LabelMap argmax_labels(const Tensor& scores) {
  if (scores.rank() != 4) {
    throw DimensionError("argmax_labels expects [B,n,H,W], got " + shape_str(scores.shape()));
  }
  const std::int64_t b = scores.dim(0), n = scores.dim(1), h = scores.dim(2), w = scores.dim(3);
  LabelMap out(b, h, w);
  dispatch(scores.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* s = scores.data<T>().data();
    const std::int64_t plane = h * w;
    for (std::int64_t bi = 0; bi < b; ++bi) {
      const T* base = s + bi * n * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        std::int64_t best = 0;
        T best_v = base[i];
        for (std::int64_t c = 1; c < n; ++c) {
          if (base[c * plane + i] > best_v) {
            best_v = base[c * plane + i];
            best = c;
          }
        }
        out.values[static_cast<std::size_t>(bi * plane + i)] = static_cast<std::uint8_t>(best);
      }
    }
  });
  return out;
}

}  // namespace swintr
