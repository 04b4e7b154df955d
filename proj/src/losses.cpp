#include "hybridnet/losses.hpp"

#include <cmath>
#include <string>

#include "hybridnet/errors.hpp"
#include "hybridnet/ops.hpp"

namespace hybridnet {

LabelMap::LabelMap(std::size_t h, std::size_t w, std::vector<int> values)
    : height(h), width(w), labels(std::move(values)) {
  if (labels.size() != h * w) throw ShapeError("label map length does not match " + std::to_string(h) + "x" + std::to_string(w));
}

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto v : valid) n += v != 0;
  return n;
}

Mask depth_validity(const Tensor& depth) {
  if (depth.rank() != 3 || depth.dim(0) != 1) {
    throw ShapeError("depth map must be 1xHxW, got " + shape_to_string(depth.dims()));
  }
  Mask m(depth.dim(1), depth.dim(2), false);
  const auto d = depth.data();
  for (std::size_t i = 0; i < d.size(); ++i) m.valid[i] = (std::isfinite(d[i]) && d[i] > 0.0) ? 1 : 0;
  return m;
}

namespace {

void require_plane(const Shape& dims, std::size_t h, std::size_t w, const char* op, const char* what) {
  if (dims.size() != 3 || dims[0] != 1 || dims[1] != h || dims[2] != w) {
    throw ShapeError(std::string(op) + ": " + what + " must be 1x" + std::to_string(h) + "x" + std::to_string(w) +
                     ", got " + shape_to_string(dims));
  }
}

struct Moments {
  std::size_t count = 0;
  double mu = 0.0;
  double sigma = 0.0;
};

Moments valid_moments(std::span<const double> x, const Mask& valid) {
  Moments m;
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (valid.valid[i]) {
      total += x[i];
      ++m.count;
    }
  }
  if (m.count == 0) throw DataError("mean_variance_normalize: no valid pixels");
  m.mu = total / static_cast<double>(m.count);
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (valid.valid[i]) sq += (x[i] - m.mu) * (x[i] - m.mu);
  }
  m.sigma = std::sqrt(sq / static_cast<double>(m.count));
  return m;
}

}  // namespace

Var seg_cross_entropy(const Var& scores, const LabelMap& labels, int ignore_label, Reduction reduction) {
  const Tensor& s = scores.value();
  if (s.rank() != 3) throw ShapeError("seg_cross_entropy: scores must be KxHxW, got " + shape_to_string(s.dims()));
  const std::size_t k = s.dim(0);
  const std::size_t pixels = s.dim(1) * s.dim(2);
  if (labels.height != s.dim(1) || labels.width != s.dim(2)) {
    throw ShapeError("seg_cross_entropy: label map " + std::to_string(labels.height) + "x" +
                     std::to_string(labels.width) + " does not match scores " + shape_to_string(s.dims()));
  }

  std::size_t count = 0;
  for (std::size_t i = 0; i < pixels; ++i) {
    const int l = labels.labels[i];
    if (l == ignore_label) continue;
    if (l < 0 || static_cast<std::size_t>(l) >= k) {
      throw DataError("seg_cross_entropy: label " + std::to_string(l) + " at pixel " + std::to_string(i) +
                      " outside [0, " + std::to_string(k) + ")");
    }
    ++count;
  }

  const auto sd = s.data();
  double total = 0.0;
  for (std::size_t i = 0; i < pixels; ++i) {
    const int l = labels.labels[i];
    if (l == ignore_label) continue;
    double m = sd[i];
    for (std::size_t c = 1; c < k; ++c) m = std::max(m, sd[c * pixels + i]);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(sd[c * pixels + i] - m);
    total += m + std::log(z) - sd[static_cast<std::size_t>(l) * pixels + i];
  }
  double factor = 1.0;
  if (reduction == Reduction::mean) factor = count > 0 ? 1.0 / static_cast<double>(count) : 0.0;

  return record(Tensor::scalar(total * factor), {scores},
                [labels, ignore_label, factor, k, pixels](BackwardContext& ctx) {
                  const auto sd = ctx.input_value(0).data();
                  auto ds = ctx.input_grad(0);
                  const double g = ctx.output_grad()[0] * factor;
                  for (std::size_t i = 0; i < pixels; ++i) {
                    const int l = labels.labels[i];
                    if (l == ignore_label) continue;
                    double m = sd[i];
                    for (std::size_t c = 1; c < k; ++c) m = std::max(m, sd[c * pixels + i]);
                    double z = 0.0;
                    for (std::size_t c = 0; c < k; ++c) z += std::exp(sd[c * pixels + i] - m);
                    for (std::size_t c = 0; c < k; ++c) {
                      const double prob = std::exp(sd[c * pixels + i] - m) / z;
                      const double target = static_cast<std::size_t>(l) == c ? 1.0 : 0.0;
                      ds[c * pixels + i] += g * (prob - target);
                    }
                  }
                });
}

Normalized mean_variance_normalize(const Var& depth, const Mask& valid, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("mean_variance_normalize: epsilon must be positive");
  require_plane(depth.dims(), valid.height, valid.width, "mean_variance_normalize", "depth");
  const auto x = depth.value().data();
  const Moments m = valid_moments(x, valid);
  const double s = m.sigma + epsilon;

  Tensor out(depth.dims());
  auto od = out.mutable_data();
  for (std::size_t i = 0; i < x.size(); ++i) od[i] = valid.valid[i] ? (x[i] - m.mu) / s : x[i];

  Normalized result;
  result.stats = {m.mu, m.sigma, epsilon};
  result.map = record(std::move(out), {depth}, [valid, m, s](BackwardContext& ctx) {
    const auto x = ctx.input_value(0).data();
    const auto g = ctx.output_grad();
    auto dx = ctx.input_grad(0);
    const double n = static_cast<double>(m.count);
    double g_sum = 0.0;
    double g_dot_centered = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!valid.valid[i]) continue;
      g_sum += g[i];
      g_dot_centered += g[i] * (x[i] - m.mu);
    }
    const double g_mean = g_sum / n;
    const double sigma_term = m.sigma > 0.0 ? g_dot_centered / (s * s * n * m.sigma) : 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (valid.valid[i]) {
        dx[i] += (g[i] - g_mean) / s - sigma_term * (x[i] - m.mu);
      } else {
        dx[i] += g[i];
      }
    }
  });
  return result;
}

std::pair<Tensor, NormStats> mean_variance_normalize(const Tensor& depth, const Mask& valid, double epsilon) {
  auto n = mean_variance_normalize(constant(depth), valid, epsilon);
  return {n.map.value(), n.stats};
}

Var depth_linear_loss(const Var& pred, const Tensor& gt, const Mask& valid) {
  require_plane(pred.dims(), valid.height, valid.width, "depth_linear_loss", "prediction");
  require_plane(gt.dims(), valid.height, valid.width, "depth_linear_loss", "ground truth");
  const std::size_t count = valid.count();
  if (count == 0) throw DataError("depth_linear_loss: no valid pixels");
  const auto p = pred.value().data();
  const auto t = gt.data();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (valid.valid[i]) total += (p[i] - t[i]) * (p[i] - t[i]);
  }
  const double n = static_cast<double>(count);
  return record(Tensor::scalar(total / (2.0 * n)), {pred}, [gt, valid, n](BackwardContext& ctx) {
    const auto p = ctx.input_value(0).data();
    const auto t = gt.data();
    auto dp = ctx.input_grad(0);
    const double g = ctx.output_grad()[0] / n;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (valid.valid[i]) dp[i] += g * (p[i] - t[i]);
    }
  });
}

Var depth_normalized_loss(const Var& pred, const Tensor& gt, const Mask& valid, double epsilon) {
  const auto gt_norm = mean_variance_normalize(gt, valid, epsilon);
  const auto pred_norm = mean_variance_normalize(pred, valid, epsilon);
  return depth_linear_loss(pred_norm.map, gt_norm.first, valid);
}

LossBreakdown combine_losses(double l_s, double l_dl, double l_dn, double alpha) {
  return {l_s, l_dl, l_dn, alpha * l_s + (l_dl + l_dn)};
}

Var hybrid_total(const Var& l_s, const Var& l_dl, const Var& l_dn, double alpha) {
  if (!(alpha >= 0.0)) throw ConfigError("hybrid_loss: alpha must be >= 0");
  const LossBreakdown b = combine_losses(l_s.value().item(), l_dl.value().item(), l_dn.value().item(), alpha);
  std::vector<Var> terms{l_dl, l_dn};
  // alpha = 0 detaches the segmentation branch entirely.
  if (alpha != 0.0) terms.push_back(l_s);
  return record(Tensor::scalar(b.l_h), std::move(terms), [alpha](BackwardContext& ctx) {
    const double g = ctx.output_grad()[0];
    for (std::size_t k = 0; k < ctx.num_inputs(); ++k) {
      if (ctx.needs_grad(k)) ctx.input_grad(k)[0] += (k == 2 ? alpha : 1.0) * g;
    }
  });
}

HybridLoss hybrid_loss(const Var& scores, const LabelMap& labels, const Var& pred_depth, const Tensor& gt_depth,
                       const Mask& valid, const HybridLossOptions& options) {
  const Var l_s = seg_cross_entropy(scores, labels, options.ignore_label, options.reduction);
  const Var l_dl = depth_linear_loss(pred_depth, gt_depth, valid);
  const Var l_dn = depth_normalized_loss(pred_depth, gt_depth, valid, options.epsilon);

  HybridLoss out;
  out.total = hybrid_total(l_s, l_dl, l_dn, options.alpha);
  out.breakdown = combine_losses(l_s.value().item(), l_dl.value().item(), l_dn.value().item(), options.alpha);
  return out;
}

}  // namespace hybridnet
