#include "hybridnet/model.hpp"

#include <cmath>

#include "hybridnet/errors.hpp"
#include "hybridnet/ops.hpp"
#include "hybridnet/random.hpp"

namespace hybridnet {

void ModelConfig::validate() const {
  if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
  if (feature_channels.empty()) throw ConfigError("model: feature_channels must not be empty");
  if (global_channels.empty()) throw ConfigError("model: global_channels must not be empty");
  if (aspp_rates.empty()) throw ConfigError("model: aspp_rates must not be empty");
  for (auto c : feature_channels) {
    if (c == 0) throw ConfigError("model: feature_channels entries must be >= 1");
  }
  for (auto c : global_channels) {
    if (c == 0) throw ConfigError("model: global_channels entries must be >= 1");
  }
  for (auto r : aspp_rates) {
    if (r == 0) throw ConfigError("model: aspp_rates entries must be >= 1");
  }
  if (global_fc_dim == 0 || refine_channels == 0 || aspp_channels == 0) {
    throw ConfigError("model: layer widths must be >= 1");
  }
  if (feature_channels.size() > 16 || global_channels.size() > 16) {
    throw ConfigError("model: too many pooling stages");
  }
  const std::size_t stride = std::max(feature_stride(), global_stride());
  if (input_h == 0 || input_w == 0 || input_h % stride != 0 || input_w % stride != 0) {
    throw ConfigError("model: input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                      " must be a positive multiple of " + std::to_string(stride));
  }
}

std::string_view block_prefix(Block block) {
  switch (block) {
    case Block::features:
      return "features.";
    case Block::global_depth:
      return "global.";
    case Block::refine_depth:
      return "refine.";
    case Block::aspp:
      return "aspp.";
  }
  return "";
}

Block block_of(std::string_view name) {
  for (Block b : {Block::features, Block::global_depth, Block::refine_depth, Block::aspp}) {
    if (name.starts_with(block_prefix(b))) return b;
  }
  throw CheckpointError("parameter '" + std::string(name) + "' belongs to no known block");
}

HybridNet::HybridNet(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;

  std::size_t in = 3;
  for (std::size_t b = 0; b < c.feature_channels.size(); ++b) {
    const std::string block = "features.block" + std::to_string(b + 1);
    add_conv(block + ".conv0", in, c.feature_channels[b], 3);
    add_conv(block + ".conv1", c.feature_channels[b], c.feature_channels[b], 3);
    in = c.feature_channels[b];
  }

  in = 3;
  for (std::size_t s = 0; s < c.global_channels.size(); ++s) {
    add_conv("global.conv" + std::to_string(s), in, c.global_channels[s], 3);
    in = c.global_channels[s];
  }
  const std::size_t flat = c.global_channels.back() * (c.input_h / c.global_stride()) * (c.input_w / c.global_stride());
  const std::size_t coarse = (c.input_h / c.feature_stride()) * (c.input_w / c.feature_stride());
  add_linear("global.fc0", flat, c.global_fc_dim);
  add_linear("global.fc1", c.global_fc_dim, coarse);

  add_conv("refine.conv0", 3 + c.feature_channels.back() + 1, c.refine_channels, 3);
  add_conv("refine.conv1", c.refine_channels, c.refine_channels, 3);
  add_conv("refine.conv2", c.refine_channels, 1, 3);

  for (std::size_t r = 0; r < c.aspp_rates.size(); ++r) {
    const std::string branch = "aspp.branch" + std::to_string(r);
    add_conv(branch + ".atrous", c.feature_channels.back(), c.aspp_channels, 3);
    add_conv(branch + ".classifier", c.aspp_channels, c.num_classes, 1);
  }

  Rng rng(c.seed);
  for (auto& prm : params_) {
    if (prm.name.ends_with(".bias")) continue;
    const auto& d = prm.value.dims();
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < d.size(); ++i) fan_in *= d[i];
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : prm.value.mutable_data()) v = std_dev * rng.normal();
  }
}

void HybridNet::add_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel) {
  index_[name + ".weight"] = params_.size();
  params_.emplace_back(name + ".weight", Tensor({out, in, kernel, kernel}));
  index_[name + ".bias"] = params_.size();
  params_.emplace_back(name + ".bias", Tensor({out}));
}

void HybridNet::add_linear(const std::string& name, std::size_t in, std::size_t out) {
  index_[name + ".weight"] = params_.size();
  params_.emplace_back(name + ".weight", Tensor({out, in}));
  index_[name + ".bias"] = params_.size();
  params_.emplace_back(name + ".bias", Tensor({out}));
}

Parameter& HybridNet::parameter(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw CheckpointError("unknown parameter '" + std::string(name) + "'");
  return params_[it->second];
}

const Parameter& HybridNet::parameter(std::string_view name) const {
  return const_cast<HybridNet*>(this)->parameter(name);
}

std::vector<Parameter*> HybridNet::block_parameters(Block block) {
  std::vector<Parameter*> out;
  for (auto& prm : params_) {
    if (std::string_view(prm.name).starts_with(block_prefix(block))) out.push_back(&prm);
  }
  return out;
}

std::vector<Parameter*> HybridNet::all_parameters() {
  std::vector<Parameter*> out;
  for (auto& prm : params_) out.push_back(&prm);
  return out;
}

std::size_t HybridNet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& prm : params_) n += prm.value.numel();
  return n;
}

Var HybridNet::p(const std::string& name) { return param(parameter(name)); }

Var HybridNet::conv(const std::string& name, const Var& x, std::size_t padding, std::size_t dilation) {
  return conv2d(x, p(name + ".weight"), p(name + ".bias"), ConvSpec{1, padding, dilation});
}

void HybridNet::check_image(const Var& image, const char* op) const {
  const auto& d = image.dims();
  if (d.size() != 3 || d[0] != 3 || d[1] != config_.input_h || d[2] != config_.input_w) {
    throw ShapeError(std::string(op) + ": expected image 3x" + std::to_string(config_.input_h) + "x" +
                     std::to_string(config_.input_w) + ", got " + shape_to_string(d));
  }
}

Var HybridNet::features_forward(const Var& image) {
  check_image(image, "features_forward");
  Var x = reshape(image, {1, 3, config_.input_h, config_.input_w});
  for (std::size_t b = 0; b < config_.feature_channels.size(); ++b) {
    const std::string block = "features.block" + std::to_string(b + 1);
    x = relu(conv(block + ".conv0", x, 1));
    x = relu(conv(block + ".conv1", x, 1));
    x = max_pool2d(x, 2, 2);
  }
  const auto& d = x.dims();
  return reshape(x, {d[1], d[2], d[3]});
}

Var HybridNet::global_depth_forward(const Var& image) {
  check_image(image, "global_depth_forward");
  Var x = reshape(image, {1, 3, config_.input_h, config_.input_w});
  for (std::size_t s = 0; s < config_.global_channels.size(); ++s) {
    x = max_pool2d(relu(conv("global.conv" + std::to_string(s), x, 1)), 2, 2);
  }
  x = reshape(x, {1, x.value().numel()});
  x = relu(linear(x, p("global.fc0.weight"), p("global.fc0.bias")));
  x = linear(x, p("global.fc1.weight"), p("global.fc1.bias"));
  return reshape(x, {1, config_.input_h / config_.feature_stride(), config_.input_w / config_.feature_stride()});
}

Var HybridNet::refine_depth_forward(const Var& image, const Var& features, const Var& coarse) {
  check_image(image, "refine_depth_forward");
  const std::size_t h = config_.input_h / config_.feature_stride();
  const std::size_t w = config_.input_w / config_.feature_stride();
  const std::size_t cf = config_.feature_channels.back();
  if (features.dims() != Shape{cf, h, w}) {
    throw ShapeError("refine_depth_forward: features must be " + shape_to_string({cf, h, w}) + ", got " +
                     shape_to_string(features.dims()));
  }
  if (coarse.dims() != Shape{1, h, w}) {
    throw ShapeError("refine_depth_forward: coarse map must be " + shape_to_string({1, h, w}) + ", got " +
                     shape_to_string(coarse.dims()));
  }
  const std::size_t H = config_.input_h;
  const std::size_t W = config_.input_w;
  const Var parts[] = {
      reshape(image, {1, 3, H, W}),
      bilinear_resize(reshape(features, {1, cf, h, w}), H, W),
      bilinear_resize(reshape(coarse, {1, 1, h, w}), H, W),
  };
  Var x = concat_channels(parts);
  x = relu(conv("refine.conv0", x, 1));
  x = relu(conv("refine.conv1", x, 1));
  x = softplus(conv("refine.conv2", x, 1));
  // softplus underflows to 0 for very negative inputs; depth must stay > 0.
  x = add(x, constant(Tensor::filled(x.dims(), kDepthFloor)));
  return reshape(x, {1, H, W});
}

Var HybridNet::aspp_forward(const Var& features) {
  const std::size_t h = config_.input_h / config_.feature_stride();
  const std::size_t w = config_.input_w / config_.feature_stride();
  const std::size_t cf = config_.feature_channels.back();
  if (features.dims() != Shape{cf, h, w}) {
    throw ShapeError("aspp_forward: features must be " + shape_to_string({cf, h, w}) + ", got " +
                     shape_to_string(features.dims()));
  }
  const Var x = reshape(features, {1, cf, h, w});
  Var scores;
  for (std::size_t r = 0; r < config_.aspp_rates.size(); ++r) {
    const std::string branch = "aspp.branch" + std::to_string(r);
    const std::size_t rate = config_.aspp_rates[r];
    Var b = relu(conv(branch + ".atrous", x, rate, rate));
    b = conv(branch + ".classifier", b, 0);
    scores = scores.defined() ? add(scores, b) : b;
  }
  scores = bilinear_resize(scores, config_.input_h, config_.input_w);
  return reshape(scores, {config_.num_classes, config_.input_h, config_.input_w});
}

HybridVars HybridNet::hybrid_forward(const Var& image, Heads heads) {
  HybridVars out;
  const Var features = features_forward(image);
  if (heads != Heads::segmentation) {
    out.depth = refine_depth_forward(image, features, global_depth_forward(image));
  }
  if (heads != Heads::depth) out.class_scores = aspp_forward(features);
  return out;
}

HybridOutput HybridNet::predict(const Tensor& image) {
  auto vars = hybrid_forward(constant(image));
  return {vars.depth.value(), vars.class_scores.value()};
}

HybridNet init_model(const ModelConfig& config) { return HybridNet(config); }

}  // namespace hybridnet
