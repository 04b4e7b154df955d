#include "hybridnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hybridnet/errors.hpp"

namespace hybridnet {

void DepthAccumulator::add(std::span<const double> pred, std::span<const double> gt, const Mask& valid) {
  if (pred.size() != gt.size() || pred.size() != valid.valid.size()) {
    throw ShapeError("depth metrics: prediction, ground truth and mask sizes differ");
  }
  const double t1 = 1.25;
  const double t2 = 1.25 * 1.25;
  const double t3 = 1.25 * 1.25 * 1.25;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid.valid[i]) continue;
    const double p = pred[i];
    const double g = gt[i];
    if (!(p > 0.0) || !(g > 0.0)) {
      throw DataError("depth metrics: non-positive depth at valid pixel " + std::to_string(i));
    }
    const double ratio = std::max(p / g, g / p);
    within1_ += ratio < t1;
    within2_ += ratio < t2;
    within3_ += ratio < t3;
    const double diff = p - g;
    abs_rel_ += std::abs(diff) / g;
    sq_rel_ += diff * diff / g;
    sq_ += diff * diff;
    const double d = std::log(p) - std::log(g);
    log_sq_ += d * d;
    log_sum_ += d;
    ++count_;
  }
}

void DepthAccumulator::merge(const DepthAccumulator& other) {
  count_ += other.count_;
  within1_ += other.within1_;
  within2_ += other.within2_;
  within3_ += other.within3_;
  abs_rel_ += other.abs_rel_;
  sq_rel_ += other.sq_rel_;
  sq_ += other.sq_;
  log_sq_ += other.log_sq_;
  log_sum_ += other.log_sum_;
}

DepthMetricsReport DepthAccumulator::report() const {
  if (count_ == 0) throw DataError("depth metrics: no valid pixels");
  const double n = static_cast<double>(count_);
  DepthMetricsReport r;
  r.delta1 = static_cast<double>(within1_) / n;
  r.delta2 = static_cast<double>(within2_) / n;
  r.delta3 = static_cast<double>(within3_) / n;
  r.ard = abs_rel_ / n;
  r.srd = sq_rel_ / n;
  r.rmse_linear = std::sqrt(sq_ / n);
  r.rmse_log = std::sqrt(log_sq_ / n);
  const double mean_d = log_sum_ / n;
  // Variance of log differences; clamp cancellation noise below zero.
  r.sie = std::max(0.0, log_sq_ / n - mean_d * mean_d);
  r.pixels = count_;
  return r;
}

DepthMetricsReport depth_metrics(const Tensor& pred, const Tensor& gt, const Mask& valid) {
  if (pred.dims() != gt.dims()) {
    throw ShapeError("depth metrics: " + shape_to_string(pred.dims()) + " vs " + shape_to_string(gt.dims()));
  }
  DepthAccumulator acc;
  acc.add(pred.data(), gt.data(), valid);
  return acc.report();
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ShapeError("confusion matrices have different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

void confusion_accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt, int ignore_label) {
  if (pred.height != gt.height || pred.width != gt.width) throw ShapeError("confusion: label map sizes differ");
  const auto k = static_cast<long>(cm.num_classes());
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const int g = gt.labels[i];
    if (g == ignore_label) continue;
    const int p = pred.labels[i];
    if (g < 0 || g >= k) throw DataError("confusion: ground-truth label " + std::to_string(g) + " out of range");
    if (p < 0 || p >= k) throw DataError("confusion: predicted label " + std::to_string(p) + " out of range");
    ++cm.at(static_cast<std::size_t>(g), static_cast<std::size_t>(p));
  }
}

ConfusionMatrix confusion_accumulate(const LabelMap& pred, const LabelMap& gt, std::size_t num_classes,
                                     int ignore_label) {
  ConfusionMatrix cm(num_classes);
  confusion_accumulate(cm, pred, gt, ignore_label);
  return cm;
}

SegMetricsReport seg_metrics(const ConfusionMatrix& cm) {
  const std::size_t k = cm.num_classes();
  const std::uint64_t total = cm.total();
  if (total == 0) throw DataError("seg metrics: empty confusion matrix");

  std::vector<std::uint64_t> rows(k, 0), cols(k, 0);
  std::uint64_t trace = 0;
  for (std::size_t g = 0; g < k; ++g) {
    for (std::size_t p = 0; p < k; ++p) {
      rows[g] += cm.at(g, p);
      cols[p] += cm.at(g, p);
    }
    trace += cm.at(g, g);
  }

  SegMetricsReport r;
  r.global_acc = static_cast<double>(trace) / static_cast<double>(total);
  r.per_class_iou.resize(k);
  double acc_sum = 0.0, iou_sum = 0.0;
  std::size_t acc_n = 0, iou_n = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const auto tp = static_cast<double>(cm.at(c, c));
    if (rows[c] > 0) {
      acc_sum += tp / static_cast<double>(rows[c]);
      ++acc_n;
    }
    const std::uint64_t uni = rows[c] + cols[c] - cm.at(c, c);
    if (uni > 0) {
      const double iou = tp / static_cast<double>(uni);
      r.per_class_iou[c] = iou;
      iou_sum += iou;
      ++iou_n;
    }
  }
  r.class_acc = acc_n > 0 ? acc_sum / static_cast<double>(acc_n) : 0.0;
  r.mean_iou = iou_n > 0 ? iou_sum / static_cast<double>(iou_n) : 0.0;
  return r;
}

LabelMap argmax_labels(const Tensor& scores) {
  if (scores.rank() != 3) throw ShapeError("argmax_labels: expected KxHxW, got " + shape_to_string(scores.dims()));
  const std::size_t k = scores.dim(0);
  const std::size_t pixels = scores.dim(1) * scores.dim(2);
  LabelMap out(scores.dim(1), scores.dim(2), 0);
  const auto s = scores.data();
  for (std::size_t i = 0; i < pixels; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (s[c * pixels + i] > s[best * pixels + i]) best = c;
    }
    out.labels[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace hybridnet
