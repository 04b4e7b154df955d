#include "hybridnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "hybridnet/errors.hpp"
#include "hybridnet/parallel.hpp"

namespace hybridnet {
namespace {

BranchRecorder* active_recorder = nullptr;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Column-block width for GEMM tasks. Fixed so results do not depend on thread count.
constexpr std::size_t kColumnBlock = 1024;
constexpr std::size_t kRowBlock = 8;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     shape_to_string(t.dims()));
  }
}

// Reusable im2col buffers; fresh multi-megabyte allocations per call cost
// more in page faults than the unfolding itself.
double* scratch(std::size_t slot, std::size_t size) {
  thread_local std::vector<double> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b.data();
}

void accumulate(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

struct ConvGeometry {
  std::size_t channels, height, width, kernel, out_h, out_w;
  ConvSpec spec;

  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t pixels() const { return out_h * out_w; }
};

// Unfolds one image (C x H x W) into a (C*K*K) x (out_h*out_w) matrix.
void im2col(const double* image, const ConvGeometry& g, double* cols) {
  const std::size_t kk = g.kernel * g.kernel;
  const std::size_t pixels = g.pixels();
  parallel_for(g.channels, [&](std::size_t c) {
    const double* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kernel; ++i) {
      for (std::size_t j = 0; j < g.kernel; ++j) {
        double* row = cols + (c * kk + i * g.kernel + j) * pixels;
        for (std::size_t y = 0; y < g.out_h; ++y) {
          const long iy = static_cast<long>(y * g.spec.stride + i * g.spec.dilation) - static_cast<long>(g.spec.padding);
          double* dst = row + y * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t x = 0; x < g.out_w; ++x) {
            const long ix =
                static_cast<long>(x * g.spec.stride + j * g.spec.dilation) - static_cast<long>(g.spec.padding);
            dst[x] = (ix < 0 || ix >= static_cast<long>(g.width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  });
}

// Adjoint of im2col: scatters column gradients back onto the image gradient.
void col2im(const double* cols, const ConvGeometry& g, double* image_grad) {
  const std::size_t kk = g.kernel * g.kernel;
  const std::size_t pixels = g.pixels();
  parallel_for(g.channels, [&](std::size_t c) {
    double* plane = image_grad + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kernel; ++i) {
      for (std::size_t j = 0; j < g.kernel; ++j) {
        const double* row = cols + (c * kk + i * g.kernel + j) * pixels;
        for (std::size_t y = 0; y < g.out_h; ++y) {
          const long iy = static_cast<long>(y * g.spec.stride + i * g.spec.dilation) - static_cast<long>(g.spec.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          const double* src = row + y * g.out_w;
          double* dst = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t x = 0; x < g.out_w; ++x) {
            const long ix =
                static_cast<long>(x * g.spec.stride + j * g.spec.dilation) - static_cast<long>(g.spec.padding);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[x];
          }
        }
      }
    }
  });
}

}  // namespace

std::size_t conv_output_size(std::size_t input, std::size_t kernel, const ConvSpec& spec) {
  if (spec.stride == 0 || spec.dilation == 0 || kernel == 0) {
    throw SpecError("conv spec requires stride, dilation and kernel >= 1");
  }
  const long span = static_cast<long>(input + 2 * spec.padding) - static_cast<long>(spec.dilation * (kernel - 1)) - 1;
  if (span < 0 || span % static_cast<long>(spec.stride) != 0) {
    throw SpecError("conv geometry (size " + std::to_string(input) + ", kernel " + std::to_string(kernel) +
                    ", stride " + std::to_string(spec.stride) + ", padding " + std::to_string(spec.padding) +
                    ", dilation " + std::to_string(spec.dilation) + ") does not give an integral output size");
  }
  return static_cast<std::size_t>(span) / spec.stride + 1;
}

Var conv2d(const Var& input, const Var& weight, const Var& bias, const ConvSpec& spec) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  require_rank(x, 4, "conv2d", "input");
  require_rank(w, 4, "conv2d", "weight");
  require_rank(b, 1, "conv2d", "bias");
  if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d: kernel must be square, got " + shape_to_string(w.dims()));
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, input has " +
                     std::to_string(x.dim(1)));
  }
  if (b.dim(0) != w.dim(0)) throw ShapeError("conv2d: bias length does not match output channels");

  ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), 0, 0, spec};
  g.out_h = conv_output_size(g.height, g.kernel, spec);
  g.out_w = conv_output_size(g.width, g.kernel, spec);

  const std::size_t batch = x.dim(0);
  const std::size_t out_c = w.dim(0);
  const std::size_t patch = g.patch();
  const std::size_t pixels = g.pixels();
  const std::size_t in_image = g.channels * g.height * g.width;
  const std::size_t out_image = out_c * pixels;

  Tensor out({batch, out_c, g.out_h, g.out_w});
  double* cols = scratch(0, patch * pixels);
  const ConstMap wmat(w.data().data(), static_cast<long>(out_c), static_cast<long>(patch));
  const std::size_t blocks = ceil_div(pixels, kColumnBlock);

  for (std::size_t n = 0; n < batch; ++n) {
    im2col(x.data().data() + n * in_image, g, cols);
    const ConstMap cmat(cols, static_cast<long>(patch), static_cast<long>(pixels));
    MutMap omat(out.mutable_data().data() + n * out_image, static_cast<long>(out_c), static_cast<long>(pixels));
    parallel_for(blocks, [&](std::size_t blk) {
      const long c0 = static_cast<long>(blk * kColumnBlock);
      const long len = static_cast<long>(std::min(kColumnBlock, pixels - blk * kColumnBlock));
      omat.middleCols(c0, len).noalias() = wmat * cmat.middleCols(c0, len);
      for (std::size_t o = 0; o < out_c; ++o) {
        omat.row(static_cast<long>(o)).segment(c0, len).array() += b[o];
      }
    });
  }

  return record(std::move(out), {input, weight, bias}, [g, batch, out_c](BackwardContext& ctx) {
    const Tensor& x = ctx.input_value(0);
    const Tensor& w = ctx.input_value(1);
    const auto grad = ctx.output_grad();
    const std::size_t patch = g.patch();
    const std::size_t pixels = g.pixels();
    const std::size_t in_image = g.channels * g.height * g.width;
    const std::size_t out_image = out_c * pixels;
    const std::size_t blocks = ceil_div(pixels, kColumnBlock);

    if (ctx.needs_grad(2)) {
      auto db = ctx.input_grad(2);
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t o = 0; o < out_c; ++o) {
          const double* row = grad.data() + n * out_image + o * pixels;
          double acc = 0.0;
          for (std::size_t p = 0; p < pixels; ++p) acc += row[p];
          db[o] += acc;
        }
      }
    }

    const bool need_w = ctx.needs_grad(1);
    const bool need_x = ctx.needs_grad(0);
    if (!need_w && !need_x) return;

    double* cols = need_w ? scratch(0, patch * pixels) : nullptr;
    double* dcols = need_x ? scratch(1, patch * pixels) : nullptr;
    const ConstMap wmat(w.data().data(), static_cast<long>(out_c), static_cast<long>(patch));

    for (std::size_t n = 0; n < batch; ++n) {
      const ConstMap gmat(grad.data() + n * out_image, static_cast<long>(out_c), static_cast<long>(pixels));
      if (need_w) {
        im2col(x.data().data() + n * in_image, g, cols);
        const ConstMap cmat(cols, static_cast<long>(patch), static_cast<long>(pixels));
        MutMap dw(ctx.input_grad(1).data(), static_cast<long>(out_c), static_cast<long>(patch));
        parallel_for(ceil_div(out_c, kRowBlock), [&](std::size_t blk) {
          const long r0 = static_cast<long>(blk * kRowBlock);
          const long len = static_cast<long>(std::min(kRowBlock, out_c - blk * kRowBlock));
          dw.middleRows(r0, len).noalias() += gmat.middleRows(r0, len) * cmat.transpose();
        });
      }
      if (need_x) {
        MutMap dc(dcols, static_cast<long>(patch), static_cast<long>(pixels));
        parallel_for(blocks, [&](std::size_t blk) {
          const long c0 = static_cast<long>(blk * kColumnBlock);
          const long len = static_cast<long>(std::min(kColumnBlock, pixels - blk * kColumnBlock));
          dc.middleCols(c0, len).noalias() = wmat.transpose() * gmat.middleCols(c0, len);
        });
        col2im(dcols, g, ctx.input_grad(0).data() + n * in_image);
      }
    }
  });
}

Var max_pool2d(const Var& input, std::size_t kernel, std::size_t stride) {
  const Tensor& x = input.value();
  require_rank(x, 4, "max_pool2d", "input");
  if (kernel == 0 || stride == 0) throw SpecError("max_pool2d: kernel and stride must be positive");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  if (h < kernel || w < kernel || (h - kernel) % stride != 0 || (w - kernel) % stride != 0) {
    throw ShapeError("max_pool2d: input " + shape_to_string(x.dims()) + " not evenly divisible by kernel " +
                     std::to_string(kernel) + " / stride " + std::to_string(stride));
  }
  const std::size_t oh = (h - kernel) / stride + 1;
  const std::size_t ow = (w - kernel) / stride + 1;

  Tensor out({x.dim(0), x.dim(1), oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  auto od = out.mutable_data();
  const auto xd = x.data();
  parallel_for(planes, [&](std::size_t plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        std::size_t best = base + (y * stride) * w + xo * stride;
        for (std::size_t i = 0; i < kernel; ++i) {
          for (std::size_t j = 0; j < kernel; ++j) {
            const std::size_t idx = base + (y * stride + i) * w + xo * stride + j;
            if (xd[idx] > xd[best]) best = idx;
          }
        }
        const std::size_t o = (plane * oh + y) * ow + xo;
        od[o] = xd[best];
        (*argmax)[o] = best;
      }
    }
  });
  if (active_recorder) {
    for (std::size_t a : *argmax) active_recorder->fold(a);
  }

  return record(std::move(out), {input}, [argmax](BackwardContext& ctx) {
    auto dx = ctx.input_grad(0);
    const auto grad = ctx.output_grad();
    for (std::size_t o = 0; o < grad.size(); ++o) dx[(*argmax)[o]] += grad[o];
  });
}

namespace {

struct AxisWeights {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

AxisWeights align_corners_weights(std::size_t in, std::size_t out) {
  AxisWeights a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.frac.resize(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src =
        (out > 1) ? static_cast<double>(i * (in - 1)) / static_cast<double>(out - 1) : 0.0;
    std::size_t lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    a.lo[i] = lo;
    a.hi[i] = std::min(lo + 1, in - 1);
    a.frac[i] = src - static_cast<double>(lo);
  }
  return a;
}

}  // namespace

Var bilinear_resize(const Var& input, std::size_t out_h, std::size_t out_w) {
  const Tensor& x = input.value();
  require_rank(x, 4, "bilinear_resize", "input");
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: output size must be >= 1");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  if (h == 0 || w == 0) throw ShapeError("bilinear_resize: empty input");

  auto ry = std::make_shared<AxisWeights>(align_corners_weights(h, out_h));
  auto rx = std::make_shared<AxisWeights>(align_corners_weights(w, out_w));

  Tensor out({x.dim(0), x.dim(1), out_h, out_w});
  auto od = out.mutable_data();
  const auto xd = x.data();
  parallel_for(planes, [&](std::size_t plane) {
    const double* src = xd.data() + plane * h * w;
    double* dst = od.data() + plane * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const double fy = ry->frac[y];
      const double* r0 = src + ry->lo[y] * w;
      const double* r1 = src + ry->hi[y] * w;
      for (std::size_t xo = 0; xo < out_w; ++xo) {
        const double fx = rx->frac[xo];
        const std::size_t x0 = rx->lo[xo];
        const std::size_t x1 = rx->hi[xo];
        const double top = (1.0 - fx) * r0[x0] + fx * r0[x1];
        const double bottom = (1.0 - fx) * r1[x0] + fx * r1[x1];
        dst[y * out_w + xo] = (1.0 - fy) * top + fy * bottom;
      }
    }
  });

  return record(std::move(out), {input}, [ry, rx, planes, h, w, out_h, out_w](BackwardContext& ctx) {
    auto dx = ctx.input_grad(0);
    const auto grad = ctx.output_grad();
    parallel_for(planes, [&](std::size_t plane) {
      const double* g = grad.data() + plane * out_h * out_w;
      double* dst = dx.data() + plane * h * w;
      for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = ry->frac[y];
        double* r0 = dst + ry->lo[y] * w;
        double* r1 = dst + ry->hi[y] * w;
        for (std::size_t xo = 0; xo < out_w; ++xo) {
          const double fx = rx->frac[xo];
          const double v = g[y * out_w + xo];
          const std::size_t x0 = rx->lo[xo];
          const std::size_t x1 = rx->hi[xo];
          r0[x0] += (1.0 - fy) * (1.0 - fx) * v;
          r0[x1] += (1.0 - fy) * fx * v;
          r1[x0] += fy * (1.0 - fx) * v;
          r1[x1] += fy * fx * v;
        }
      }
    });
  });
}

Var linear(const Var& input, const Var& weight, const Var& bias) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  require_rank(x, 2, "linear", "input");
  require_rank(w, 2, "linear", "weight");
  require_rank(b, 1, "linear", "bias");
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError("linear: input has " + std::to_string(x.dim(1)) + " features, weight expects " +
                     std::to_string(w.dim(1)));
  }
  if (b.dim(0) != w.dim(0)) throw ShapeError("linear: bias length does not match weight rows");
  const long n = static_cast<long>(x.dim(0));
  const long f = static_cast<long>(x.dim(1));
  const long gdim = static_cast<long>(w.dim(0));

  Tensor out({x.dim(0), w.dim(0)});
  MutMap om(out.mutable_data().data(), n, gdim);
  const ConstMap xm(x.data().data(), n, f);
  const ConstMap wm(w.data().data(), gdim, f);
  om.noalias() = xm * wm.transpose();
  for (long r = 0; r < n; ++r) {
    for (long c = 0; c < gdim; ++c) om(r, c) += b[static_cast<std::size_t>(c)];
  }

  return record(std::move(out), {input, weight, bias}, [n, f, gdim](BackwardContext& ctx) {
    const ConstMap gm(ctx.output_grad().data(), n, gdim);
    if (ctx.needs_grad(0)) {
      const ConstMap wm(ctx.input_value(1).data().data(), gdim, f);
      MutMap dx(ctx.input_grad(0).data(), n, f);
      dx.noalias() += gm * wm;
    }
    if (ctx.needs_grad(1)) {
      const ConstMap xm(ctx.input_value(0).data().data(), n, f);
      MutMap dw(ctx.input_grad(1).data(), gdim, f);
      dw.noalias() += gm.transpose() * xm;
    }
    if (ctx.needs_grad(2)) {
      auto db = ctx.input_grad(2);
      for (long r = 0; r < n; ++r) {
        for (long c = 0; c < gdim; ++c) db[static_cast<std::size_t>(c)] += gm(r, c);
      }
    }
  });
}

Var relu(const Var& input) {
  const Tensor& x = input.value();
  Tensor out(x.dims());
  auto od = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  if (active_recorder) {
    for (std::size_t i = 0; i < xd.size(); ++i) active_recorder->fold(xd[i] > 0.0);
  }
  return record(std::move(out), {input}, [](BackwardContext& ctx) {
    auto dx = ctx.input_grad(0);
    const auto xd = ctx.input_value(0).data();
    const auto g = ctx.output_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xd[i] > 0.0) dx[i] += g[i];
    }
  });
}

Var softplus(const Var& input) {
  const Tensor& x = input.value();
  Tensor out(x.dims());
  auto od = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    od[i] = std::max(xd[i], 0.0) + std::log1p(std::exp(-std::abs(xd[i])));
  }
  return record(std::move(out), {input}, [](BackwardContext& ctx) {
    auto dx = ctx.input_grad(0);
    const auto xd = ctx.input_value(0).data();
    const auto g = ctx.output_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double e = std::exp(-std::abs(xd[i]));
      const double sigmoid = xd[i] >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
      dx[i] += g[i] * sigmoid;
    }
  });
}

Var concat_channels(std::span<const Var> inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels: no inputs");
  const Tensor& first = inputs[0].value();
  require_rank(first, 4, "concat_channels", "input");
  std::size_t channels = 0;
  for (const auto& v : inputs) {
    const Tensor& t = v.value();
    require_rank(t, 4, "concat_channels", "input");
    if (t.dim(0) != first.dim(0) || t.dim(2) != first.dim(2) || t.dim(3) != first.dim(3)) {
      throw ShapeError("concat_channels: " + shape_to_string(t.dims()) + " incompatible with " +
                       shape_to_string(first.dims()));
    }
    channels += t.dim(1);
  }
  const std::size_t batch = first.dim(0);
  const std::size_t plane = first.dim(2) * first.dim(3);
  Tensor out({batch, channels, first.dim(2), first.dim(3)});
  auto od = out.mutable_data();
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& v : inputs) {
    const Tensor& t = v.value();
    offsets.push_back(offset);
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t len = t.dim(1) * plane;
      std::copy_n(t.data().data() + n * len, len, od.data() + (n * channels + offset) * plane);
    }
    offset += t.dim(1);
  }
  std::vector<Var> args(inputs.begin(), inputs.end());
  return record(std::move(out), std::move(args), [offsets, batch, channels, plane](BackwardContext& ctx) {
    const auto g = ctx.output_grad();
    for (std::size_t k = 0; k < ctx.num_inputs(); ++k) {
      if (!ctx.needs_grad(k)) continue;
      auto dx = ctx.input_grad(k);
      const std::size_t len = ctx.input_value(k).dim(1) * plane;
      for (std::size_t n = 0; n < batch; ++n) {
        accumulate(dx.subspan(n * len, len), g.subspan((n * channels + offsets[k]) * plane, len));
      }
    }
  });
}

Var reshape(const Var& input, Shape dims) {
  Tensor out = input.value().reshaped(std::move(dims));
  return record(std::move(out), {input}, [](BackwardContext& ctx) { accumulate(ctx.input_grad(0), ctx.output_grad()); });
}

Var add(const Var& a, const Var& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("add: " + shape_to_string(a.dims()) + " vs " + shape_to_string(b.dims()));
  }
  Tensor out(a.dims());
  auto od = out.mutable_data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = a.value()[i] + b.value()[i];
  return record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (ctx.needs_grad(k)) accumulate(ctx.input_grad(k), ctx.output_grad());
    }
  });
}

Var mul(const Var& a, const Var& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("mul: " + shape_to_string(a.dims()) + " vs " + shape_to_string(b.dims()));
  }
  Tensor out(a.dims());
  auto od = out.mutable_data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = a.value()[i] * b.value()[i];
  return record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    const auto g = ctx.output_grad();
    for (std::size_t k = 0; k < 2; ++k) {
      if (!ctx.needs_grad(k)) continue;
      auto dx = ctx.input_grad(k);
      const auto other = ctx.input_value(1 - k).data();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * other[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out(a.dims());
  auto od = out.mutable_data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = a.value()[i] * factor;
  return record(std::move(out), {a}, [factor](BackwardContext& ctx) {
    auto dx = ctx.input_grad(0);
    const auto g = ctx.output_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
  });
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return record(Tensor::scalar(acc), {a}, [](BackwardContext& ctx) {
    auto dx = ctx.input_grad(0);
    const double g = ctx.output_grad()[0];
    for (double& d : dx) d += g;
  });
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  if (terms.size() != weights.size()) throw ShapeError("weighted_sum: terms/weights length mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    if (terms[k].value().numel() != 1) throw ShapeError("weighted_sum: terms must be scalars");
    acc += weights[k] * terms[k].value()[0];
  }
  std::vector<double> w(weights.begin(), weights.end());
  std::vector<Var> args(terms.begin(), terms.end());
  return record(Tensor::scalar(acc), std::move(args), [w](BackwardContext& ctx) {
    const double g = ctx.output_grad()[0];
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (ctx.needs_grad(k)) ctx.input_grad(k)[0] += w[k] * g;
    }
  });
}

BranchRecorder::BranchRecorder() {
  if (active_recorder) throw ContractError("BranchRecorder: another recorder is already active");
  active_recorder = this;
}

BranchRecorder::~BranchRecorder() { active_recorder = nullptr; }

// FNV-1a over the value's bytes.
void BranchRecorder::fold(std::uint64_t value) {
  for (int i = 0; i < 8; ++i) {
    hash_ ^= (value >> (8 * i)) & 0xFF;
    hash_ *= 0x100000001b3ull;
  }
}

}  // namespace hybridnet
