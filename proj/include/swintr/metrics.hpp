#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swintr/label_map.hpp"
#include "swintr/tensor.hpp"

namespace swintr {

// counts(t, p): pixels of true class t predicted as p. Ignore-labeled truth
// pixels are skipped.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);

  void accumulate(const LabelMap& predicted, const LabelMap& truth);
  void merge(const ConfusionMatrix& other);

  int classes() const { return classes_; }
  std::int64_t count(int truth, int predicted) const {
    return counts_[static_cast<std::size_t>(truth * classes_ + predicted)];
  }
  std::int64_t total() const;
  std::int64_t true_positives(int c) const { return count(c, c); }
  std::int64_t false_positives(int c) const;
  std::int64_t false_negatives(int c) const;
  bool operator==(const ConfusionMatrix& o) const { return classes_ == o.classes_ && counts_ == o.counts_; }

 private:
  int classes_;
  std::vector<std::int64_t> counts_;
};

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double iou = 0;
};

// A class absent from both prediction and truth scores 1.0 on every metric;
// otherwise an empty denominator scores 0.0.
ClassMetrics metrics_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn);
ClassMetrics class_metrics(const ConfusionMatrix& cm, int c);

// Unweighted mean; throws ContractError on an empty list.
double macro_average(const std::vector<double>& values);

struct MetricsReport {
  std::vector<std::string> class_names;
  std::vector<ClassMetrics> per_class;
  ClassMetrics average;
};

MetricsReport make_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);
double mean_iou(const ConfusionMatrix& cm);
// Percentages with two decimals; one row per class plus an average row.
std::string format_report(const MetricsReport& report);

// scores [B,n,H,W] -> per-pixel argmax; ties go to the lowest class index.
LabelMap argmax_labels(const Tensor& scores);

}  // namespace swintr
