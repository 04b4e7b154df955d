#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hybridnet/losses.hpp"
#include "hybridnet/tensor.hpp"

namespace hybridnet {

struct DepthMetricsReport {
  double delta1 = 0.0;  // fraction with max(pred/gt, gt/pred) < 1.25
  double delta2 = 0.0;  // < 1.25^2
  double delta3 = 0.0;  // < 1.25^3
  double ard = 0.0;
  double srd = 0.0;
  double rmse_linear = 0.0;
  double rmse_log = 0.0;
  double sie = 0.0;
  std::size_t pixels = 0;

  bool operator==(const DepthMetricsReport&) const = default;
};

/// Running sums for pixel-pooled depth metrics. Merge in a fixed order to get
/// reproducible totals.
class DepthAccumulator {
 public:
  // Pixels where `valid` is set must have pred > 0 and gt > 0 (DataError otherwise).
  void add(std::span<const double> pred, std::span<const double> gt, const Mask& valid);
  void merge(const DepthAccumulator& other);
  std::size_t count() const { return count_; }
  DepthMetricsReport report() const;

 private:
  std::size_t count_ = 0;
  std::size_t within1_ = 0;
  std::size_t within2_ = 0;
  std::size_t within3_ = 0;
  double abs_rel_ = 0.0;
  double sq_rel_ = 0.0;
  double sq_ = 0.0;
  double log_sq_ = 0.0;
  double log_sum_ = 0.0;
};

DepthMetricsReport depth_metrics(const Tensor& pred, const Tensor& gt, const Mask& valid);

/// K x K pixel counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0) : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const { return k_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * k_ + pred]; }
  std::uint64_t& at(std::size_t gt, std::size_t pred) { return counts_[gt * k_ + pred]; }
  std::uint64_t total() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_accumulate(const LabelMap& pred, const LabelMap& gt, std::size_t num_classes,
                                     int ignore_label = kDefaultIgnoreLabel);
void confusion_accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt,
                          int ignore_label = kDefaultIgnoreLabel);

struct SegMetricsReport {
  double global_acc = 0.0;  // G
  double class_acc = 0.0;   // C
  double mean_iou = 0.0;    // IoU_class
  std::vector<std::optional<double>> per_class_iou;

  bool operator==(const SegMetricsReport&) const = default;
};

SegMetricsReport seg_metrics(const ConfusionMatrix& cm);

// Per-pixel argmax over a K x H x W score map; ties go to the lowest class.
LabelMap argmax_labels(const Tensor& scores);

}  // namespace hybridnet
