#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hybridnet/autodiff.hpp"
#include "hybridnet/tensor.hpp"

namespace hybridnet {

/// Widths and rates of the four network blocks. The defaults are a CPU-sized
/// toy topology; every width is configurable.
struct ModelConfig {
  std::size_t input_h = 64;
  std::size_t input_w = 128;
  std::size_t num_classes = 5;
  // One entry per VGG-style block (two 3x3 convs + 2x2 pool each).
  std::vector<std::size_t> feature_channels{16, 32, 64};
  // One entry per coarse-path stage (3x3 conv + 2x2 pool each).
  std::vector<std::size_t> global_channels{16, 32, 32, 32};
  std::size_t global_fc_dim = 128;
  std::size_t refine_channels = 32;
  std::vector<std::size_t> aspp_rates{1, 2, 4};
  std::size_t aspp_channels = 64;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;

  std::size_t feature_stride() const { return std::size_t{1} << feature_channels.size(); }
  std::size_t global_stride() const { return std::size_t{1} << global_channels.size(); }

  bool operator==(const ModelConfig&) const = default;
};

enum class Block { features, global_depth, refine_depth, aspp };

// Name prefix shared by every parameter of a block, e.g. "features.".
std::string_view block_prefix(Block block);
Block block_of(std::string_view parameter_name);

// Offset added to the depth head's softplus output.
inline constexpr double kDepthFloor = 1e-6;

struct HybridOutput {
  Tensor depth;         // 1 x H x W, strictly positive
  Tensor class_scores;  // K x H x W logits
};

struct HybridVars {
  Var depth;
  Var class_scores;
};

enum class Heads { both, depth, segmentation };

/// The shared-trunk multi-task network.
///
/// Image tensors are 3 x H x W. The features block is the only one whose
/// parameters feed both heads; the depth path (global + refinement) and the
/// ASPP head never read each other's parameters.
class HybridNet {
 public:
  // Seeded fan-in scaled normal init (std = sqrt(2 / fan_in)), zero biases.
  explicit HybridNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  std::vector<Parameter*> block_parameters(Block block);
  std::vector<Parameter*> all_parameters();
  std::size_t scalar_count() const;

  Var features_forward(const Var& image);
  Var global_depth_forward(const Var& image);
  Var refine_depth_forward(const Var& image, const Var& features, const Var& coarse);
  Var aspp_forward(const Var& features);

  // Features are computed once and fed to whichever heads are requested.
  HybridVars hybrid_forward(const Var& image, Heads heads = Heads::both);
  HybridOutput predict(const Tensor& image);

 private:
  void add_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel);
  void add_linear(const std::string& name, std::size_t in, std::size_t out);
  Var p(const std::string& name);
  Var conv(const std::string& name, const Var& x, std::size_t padding, std::size_t dilation = 1);
  void check_image(const Var& image, const char* op) const;

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

HybridNet init_model(const ModelConfig& config);

}  // namespace hybridnet
