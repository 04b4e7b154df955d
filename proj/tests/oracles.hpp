#pragma once

// Independent per-pixel reference implementations shared by the unit tests
// and the acceptance binary. They deliberately avoid the library's
// accumulators and confusion matrix.

#include <cmath>
#include <optional>
#include <vector>

#include "hybridnet/losses.hpp"
#include "hybridnet/metrics.hpp"
#include "hybridnet/random.hpp"
#include "hybridnet/tensor.hpp"

namespace oracle {

struct DepthRow {
  double delta1, delta2, delta3, ard, srd, rmse_linear, rmse_log, sie;
};

inline DepthRow depth(const hybridnet::Tensor& pred, const hybridnet::Tensor& gt, const hybridnet::Mask& m) {
  std::vector<double> logs;
  double n = 0, d1 = 0, d2 = 0, d3 = 0, ard = 0, srd = 0, sq = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    if (!m.valid[i]) continue;
    const double p = pred[i], g = gt[i];
    n += 1;
    // Both one-sided ratios must pass.
    d1 += (p / g < 1.25 && g / p < 1.25) ? 1 : 0;
    d2 += (p / g < 1.5625 && g / p < 1.5625) ? 1 : 0;
    d3 += (p / g < 1.953125 && g / p < 1.953125) ? 1 : 0;
    ard += std::fabs(p - g) / g;
    srd += (p - g) * (p - g) / g;
    sq += (p - g) * (p - g);
    logs.push_back(std::log(p / g));
  }
  double mean = 0;
  for (double l : logs) mean += l;
  mean /= n;
  double var = 0, lsq = 0;
  for (double l : logs) {
    var += (l - mean) * (l - mean);
    lsq += l * l;
  }
  return {d1 / n, d2 / n, d3 / n, ard / n, srd / n, std::sqrt(sq / n), std::sqrt(lsq / n), var / n};
}

struct SegRow {
  double g, c, iou;
  std::vector<std::optional<double>> per_class;
};

// Counts straight from the label maps, class by class.
inline SegRow seg(const std::vector<hybridnet::LabelMap>& preds, const std::vector<hybridnet::LabelMap>& gts,
                  int k, int ignore) {
  double correct = 0, total = 0;
  SegRow r{0, 0, 0, std::vector<std::optional<double>>(static_cast<std::size_t>(k))};
  double acc_sum = 0, acc_n = 0, iou_sum = 0, iou_n = 0;
  for (int c = 0; c < k; ++c) {
    double tp = 0, in_gt = 0, in_pred = 0;
    for (std::size_t im = 0; im < gts.size(); ++im) {
      for (std::size_t i = 0; i < gts[im].labels.size(); ++i) {
        const int g = gts[im].labels[i];
        if (g == ignore) continue;
        const int p = preds[im].labels[i];
        if (g == c) in_gt += 1;
        if (p == c) in_pred += 1;
        if (g == c && p == c) tp += 1;
      }
    }
    correct += tp;
    if (in_gt > 0) {
      acc_sum += tp / in_gt;
      acc_n += 1;
    }
    const double uni = in_gt + in_pred - tp;
    if (uni > 0) {
      r.per_class[static_cast<std::size_t>(c)] = tp / uni;
      iou_sum += tp / uni;
      iou_n += 1;
    }
  }
  for (std::size_t im = 0; im < gts.size(); ++im) {
    for (int g : gts[im].labels) total += g == ignore ? 0 : 1;
  }
  r.g = correct / total;
  r.c = acc_sum / acc_n;
  r.iou = iou_sum / iou_n;
  return r;
}

inline bool close_rel(double a, double b, double rel) {
  return std::fabs(a - b) <= rel * std::max(std::fabs(a), std::fabs(b)) || a == b;
}

// One seeded random prediction / ground-truth pair: log-normal depths around
// the ground truth (so every threshold bucket is populated), ~10 % invalid
// depth, ~10 % ignored labels, noisy label copies.
struct Case {
  hybridnet::Tensor pred, gt;
  hybridnet::Mask valid;
  hybridnet::LabelMap pred_labels, gt_labels;
};

inline Case random_case(std::uint64_t seed, std::size_t h, std::size_t w, int k, int ignore) {
  hybridnet::Rng rng(seed);
  Case c{hybridnet::Tensor({1, h, w}), hybridnet::Tensor({1, h, w}), {}, hybridnet::LabelMap(h, w),
         hybridnet::LabelMap(h, w)};
  for (std::size_t i = 0; i < h * w; ++i) {
    const double g = rng.uniform() < 0.1 ? 0.0 : rng.uniform(0.5, 80.0);
    c.gt.mutable_data()[i] = g;
    c.pred.mutable_data()[i] = (g > 0 ? g : 5.0) * std::exp(0.4 * rng.normal());
    const int gl = rng.uniform() < 0.1 ? ignore : static_cast<int>(rng.uniform_int(0, k - 1));
    c.gt_labels.labels[i] = gl;
    c.pred_labels.labels[i] =
        (gl != ignore && rng.uniform() < 0.6) ? gl : static_cast<int>(rng.uniform_int(0, k - 1));
  }
  c.valid = hybridnet::depth_validity(c.gt);
  return c;
}

}  // namespace oracle
