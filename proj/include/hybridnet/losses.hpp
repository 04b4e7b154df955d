#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hybridnet/autodiff.hpp"
#include "hybridnet/tensor.hpp"

namespace hybridnet {

inline constexpr int kDefaultIgnoreLabel = 255;
inline constexpr double kDefaultNormEpsilon = 1e-6;

struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> labels;  // row-major

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, int fill = 0) : height(h), width(w), labels(h * w, fill) {}
  LabelMap(std::size_t h, std::size_t w, std::vector<int> values);

  int at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
  bool operator==(const LabelMap&) const = default;
};

// Per-pixel validity (1 = valid).
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> valid;

  Mask() = default;
  Mask(std::size_t h, std::size_t w, bool fill = true) : height(h), width(w), valid(h * w, fill ? 1 : 0) {}

  std::size_t count() const;
  bool operator==(const Mask&) const = default;
};

// gt > 0 and finite. `depth` is 1 x H x W.
Mask depth_validity(const Tensor& depth);

enum class Reduction { sum, mean };

/// Softmax cross-entropy over a K x H x W score map. Pixels labelled
/// `ignore_label` contribute neither loss nor gradient; "mean" divides by the
/// number of remaining pixels (and returns 0 when there are none).
Var seg_cross_entropy(const Var& scores, const LabelMap& labels, int ignore_label = kDefaultIgnoreLabel,
                      Reduction reduction = Reduction::mean);

struct NormStats {
  double mu = 0.0;
  double sigma = 0.0;
  double epsilon = kDefaultNormEpsilon;
};

struct Normalized {
  Var map;
  NormStats stats;
};

/// (depth - mu) / (sigma + epsilon) with population statistics over valid
/// pixels. Invalid pixels pass through unchanged. Differentiable through mu
/// and sigma.
Normalized mean_variance_normalize(const Var& depth, const Mask& valid, double epsilon = kDefaultNormEpsilon);
std::pair<Tensor, NormStats> mean_variance_normalize(const Tensor& depth, const Mask& valid,
                                                     double epsilon = kDefaultNormEpsilon);

// (1 / 2N) * sum over valid pixels of (pred - gt)^2.
Var depth_linear_loss(const Var& pred, const Tensor& gt, const Mask& valid);

// depth_linear_loss applied to the mean-variance normalized pred and gt.
Var depth_normalized_loss(const Var& pred, const Tensor& gt, const Mask& valid,
                          double epsilon = kDefaultNormEpsilon);

struct LossBreakdown {
  double l_s = 0.0;
  double l_dl = 0.0;
  double l_dn = 0.0;
  double l_h = 0.0;
};

// l_h = alpha * l_s + (l_dl + l_dn)
LossBreakdown combine_losses(double l_s, double l_dl, double l_dn, double alpha);

// Differentiable l_h over already computed terms; its value is combine_losses(...).l_h.
Var hybrid_total(const Var& l_s, const Var& l_dl, const Var& l_dn, double alpha);

struct HybridLoss {
  LossBreakdown breakdown;
  Var total;  // differentiable l_h
};

struct HybridLossOptions {
  double alpha = 1000.0;
  int ignore_label = kDefaultIgnoreLabel;
  Reduction reduction = Reduction::mean;
  double epsilon = kDefaultNormEpsilon;
};

HybridLoss hybrid_loss(const Var& scores, const LabelMap& labels, const Var& pred_depth, const Tensor& gt_depth,
                       const Mask& valid, const HybridLossOptions& options = {});

}  // namespace hybridnet
