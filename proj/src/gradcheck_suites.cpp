#include "hybridnet/gradcheck_suites.hpp"

#include <cmath>
#include <functional>

#include "hybridnet/errors.hpp"
#include "hybridnet/losses.hpp"
#include "hybridnet/model.hpp"
#include "hybridnet/ops.hpp"
#include "hybridnet/random.hpp"

namespace hybridnet {

GradScope parse_grad_scope(std::string_view name) {
  if (name == "ops") return GradScope::ops;
  if (name == "losses") return GradScope::losses;
  if (name == "model") return GradScope::model;
  throw ConfigError("unknown gradcheck scope '" + std::string(name) + "' (expected ops, losses or model)");
}

std::string_view grad_scope_name(GradScope scope) {
  switch (scope) {
    case GradScope::ops:
      return "ops";
    case GradScope::losses:
      return "losses";
    case GradScope::model:
      return "model";
  }
  return "";
}

namespace {

Tensor random_tensor(Rng& rng, Shape dims, double scale = 1.0) {
  Tensor t(std::move(dims));
  for (double& v : t.mutable_data()) v = scale * rng.normal();
  return t;
}

// Normal draws pushed at least `gap` away from zero, for ops with a kink there.
Tensor off_kink_tensor(Rng& rng, Shape dims, double gap) {
  Tensor t(std::move(dims));
  for (double& v : t.mutable_data()) {
    const double z = rng.normal();
    v = z >= 0.0 ? z + gap : z - gap;
  }
  return t;
}

// Distinct values spaced well beyond epsilon so window maxima never tie.
Tensor distinct_tensor(Rng& rng, Shape dims) {
  Tensor t(std::move(dims));
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.01 * static_cast<double>(i);
  for (std::size_t i = d.size(); i > 1; --i) {
    std::swap(d[i - 1], d[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  }
  return t;
}

// Reduces an op output to a scalar with fixed random weights.
Var probe(const Var& out, const Tensor& weights) { return sum(mul(out, constant(weights))); }

class Suite {
 public:
  Suite(std::uint64_t seed, double threshold) : rng_(seed), threshold_(threshold) {}

  Rng& rng() { return rng_; }

  Parameter& make(const std::string& name, Tensor value) {
    owned_.push_back(std::make_unique<Parameter>(name, std::move(value)));
    return *owned_.back();
  }

  void check(const std::string& name, std::vector<Parameter*> params, const std::function<Var()>& f,
             std::size_t max_elements = 0) {
    GradCheckOptions options;
    options.max_elements_per_param = max_elements;
    results_.push_back({name, grad_check(f, params, options), threshold_});
  }

  std::vector<GradTarget> take() { return std::move(results_); }

 private:
  Rng rng_;
  double threshold_;
  std::vector<std::unique_ptr<Parameter>> owned_;
  std::vector<GradTarget> results_;
};

void conv_case(Suite& s, const std::string& name, Shape in, std::size_t out_c, std::size_t k, ConvSpec spec) {
  auto& x = s.make(name + ".input", random_tensor(s.rng(), in));
  auto& w = s.make(name + ".weight", random_tensor(s.rng(), {out_c, in[1], k, k}, 0.5));
  auto& b = s.make(name + ".bias", random_tensor(s.rng(), {out_c}));
  const std::size_t oh = conv_output_size(in[2], k, spec);
  const std::size_t ow = conv_output_size(in[3], k, spec);
  const Tensor r = random_tensor(s.rng(), {in[0], out_c, oh, ow});
  s.check(name, {&x, &w, &b}, [&x, &w, &b, r, spec] { return probe(conv2d(param(x), param(w), param(b), spec), r); });
}

std::vector<GradTarget> ops_suite(std::uint64_t seed) {
  Suite s(seed, kOpThreshold);
  auto& rng = s.rng();

  conv_case(s, "conv2d", {1, 2, 6, 7}, 3, 3, {1, 1, 1});
  conv_case(s, "conv2d_stride2", {2, 2, 7, 7}, 2, 3, {2, 1, 1});
  conv_case(s, "conv2d_dilated", {1, 3, 9, 8}, 2, 3, {1, 2, 2});
  conv_case(s, "conv2d_dilated_rate4", {1, 2, 12, 12}, 2, 3, {1, 4, 4});
  conv_case(s, "conv2d_1x1", {1, 4, 5, 5}, 3, 1, {1, 0, 1});

  {
    auto& x = s.make("max_pool2d.input", distinct_tensor(rng, {1, 2, 6, 8}));
    const Tensor r = random_tensor(rng, {1, 2, 3, 4});
    s.check("max_pool2d", {&x}, [&x, r] { return probe(max_pool2d(param(x)), r); });
  }
  {
    auto& x = s.make("bilinear_up.input", random_tensor(rng, {1, 2, 3, 5}));
    const Tensor r = random_tensor(rng, {1, 2, 7, 11});
    s.check("bilinear_resize_up", {&x}, [&x, r] { return probe(bilinear_resize(param(x), 7, 11), r); });
  }
  {
    auto& x = s.make("bilinear_down.input", random_tensor(rng, {1, 2, 8, 9}));
    const Tensor r = random_tensor(rng, {1, 2, 3, 4});
    s.check("bilinear_resize_down", {&x}, [&x, r] { return probe(bilinear_resize(param(x), 3, 4), r); });
  }
  {
    auto& x = s.make("linear.input", random_tensor(rng, {2, 6}));
    auto& w = s.make("linear.weight", random_tensor(rng, {4, 6}));
    auto& b = s.make("linear.bias", random_tensor(rng, {4}));
    const Tensor r = random_tensor(rng, {2, 4});
    s.check("linear", {&x, &w, &b}, [&x, &w, &b, r] { return probe(linear(param(x), param(w), param(b)), r); });
  }
  {
    auto& x = s.make("relu.input", off_kink_tensor(rng, {1, 2, 4, 4}, 0.1));
    const Tensor r = random_tensor(rng, {1, 2, 4, 4});
    s.check("relu", {&x}, [&x, r] { return probe(relu(param(x)), r); });
  }
  {
    auto& x = s.make("softplus.input", random_tensor(rng, {1, 2, 4, 4}, 3.0));
    const Tensor r = random_tensor(rng, {1, 2, 4, 4});
    s.check("softplus", {&x}, [&x, r] { return probe(softplus(param(x)), r); });
  }
  {
    auto& a = s.make("concat.a", random_tensor(rng, {1, 2, 3, 4}));
    auto& b = s.make("concat.b", random_tensor(rng, {1, 3, 3, 4}));
    const Tensor r = random_tensor(rng, {1, 5, 3, 4});
    s.check("concat_channels", {&a, &b}, [&a, &b, r] {
      const Var parts[] = {param(a), param(b)};
      return probe(concat_channels(parts), r);
    });
  }
  {
    auto& x = s.make("reshape.input", random_tensor(rng, {2, 6}));
    const Tensor r = random_tensor(rng, {1, 3, 2, 2});
    s.check("reshape", {&x}, [&x, r] { return probe(reshape(param(x), {1, 3, 2, 2}), r); });
  }
  {
    auto& a = s.make("binary.a", random_tensor(rng, {3, 4}));
    auto& b = s.make("binary.b", random_tensor(rng, {3, 4}));
    const Tensor r = random_tensor(rng, {3, 4});
    s.check("add", {&a, &b}, [&a, &b, r] { return probe(add(param(a), param(b)), r); });
    s.check("mul", {&a, &b}, [&a, &b, r] { return probe(mul(param(a), param(b)), r); });
    s.check("scale", {&a}, [&a, r] { return probe(scale(param(a), -2.5), r); });
    s.check("sum", {&a}, [&a] { return sum(mul(param(a), param(a))); });
  }
  {
    auto& a = s.make("weighted_sum.a", random_tensor(rng, {3}));
    auto& b = s.make("weighted_sum.b", random_tensor(rng, {4}));
    s.check("weighted_sum", {&a, &b}, [&a, &b] {
      const Var terms[] = {sum(mul(param(a), param(a))), sum(param(b))};
      const double weights[] = {0.7, -3.0};
      return weighted_sum(terms, weights);
    });
  }
  return s.take();
}

LabelMap random_labels(Rng& rng, std::size_t h, std::size_t w, std::size_t k, double ignore_fraction) {
  LabelMap labels(h, w);
  for (int& l : labels.labels) {
    l = rng.uniform() < ignore_fraction ? kDefaultIgnoreLabel : static_cast<int>(rng.uniform_int(0, k - 1));
  }
  return labels;
}

Tensor random_depth(Rng& rng, std::size_t h, std::size_t w, double invalid_fraction) {
  Tensor d({1, h, w});
  for (double& v : d.mutable_data()) v = rng.uniform() < invalid_fraction ? 0.0 : rng.uniform(1.0, 20.0);
  return d;
}

std::vector<GradTarget> losses_suite(std::uint64_t seed) {
  Suite s(seed, kOpThreshold);
  auto& rng = s.rng();
  const std::size_t k = 4, h = 5, w = 6;

  auto& scores = s.make("scores", random_tensor(rng, {k, h, w}, 2.0));
  const LabelMap labels = random_labels(rng, h, w, k, 0.2);
  s.check("seg_cross_entropy_mean", {&scores},
          [&scores, labels] { return seg_cross_entropy(param(scores), labels, kDefaultIgnoreLabel, Reduction::mean); });
  s.check("seg_cross_entropy_sum", {&scores},
          [&scores, labels] { return seg_cross_entropy(param(scores), labels, kDefaultIgnoreLabel, Reduction::sum); });

  auto& depth = s.make("depth", Tensor({1, h, w}));
  for (double& v : depth.value.mutable_data()) v = rng.uniform(1.0, 20.0);
  const Tensor gt = random_depth(rng, h, w, 0.2);
  const Mask valid = depth_validity(gt);
  const Tensor r = random_tensor(rng, {1, h, w});

  s.check("mean_variance_normalize", {&depth},
          [&depth, valid, r] { return probe(mean_variance_normalize(param(depth), valid).map, r); });
  s.check("depth_linear_loss", {&depth}, [&depth, gt, valid] { return depth_linear_loss(param(depth), gt, valid); });
  s.check("depth_normalized_loss", {&depth},
          [&depth, gt, valid] { return depth_normalized_loss(param(depth), gt, valid); });
  s.check("hybrid_loss", {&scores, &depth}, [&scores, &depth, labels, gt, valid] {
    return hybrid_loss(param(scores), labels, param(depth), gt, valid).total;
  });
  return s.take();
}

std::vector<GradTarget> model_suite(std::uint64_t seed) {
  ModelConfig config;
  config.input_h = 32;
  config.input_w = 64;
  config.seed = seed;
  HybridNet model(config);
  Rng rng(seed + 1);

  Tensor image({3, config.input_h, config.input_w});
  for (double& v : image.mutable_data()) v = rng.uniform();
  const LabelMap labels = random_labels(rng, config.input_h, config.input_w, config.num_classes, 0.1);
  const Tensor gt = random_depth(rng, config.input_h, config.input_w, 0.1);
  const Mask valid = depth_validity(gt);

  const auto f = [&] {
    const HybridVars out = model.hybrid_forward(constant(image));
    return hybrid_loss(out.class_scores, labels, out.depth, gt, valid).total;
  };
  GradCheckOptions options;
  options.max_elements_per_param = 6;
  options.skip_kinks = true;
  const auto params = model.all_parameters();
  return {{"model.hybrid_loss", grad_check(f, params, options), kModelThreshold}};
}

}  // namespace

std::vector<GradTarget> run_gradcheck_suite(GradScope scope, std::uint64_t seed) {
  switch (scope) {
    case GradScope::ops:
      return ops_suite(seed);
    case GradScope::losses:
      return losses_suite(seed);
    case GradScope::model:
      return model_suite(seed);
  }
  return {};
}

}  // namespace hybridnet
