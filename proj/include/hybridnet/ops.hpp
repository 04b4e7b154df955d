#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "hybridnet/autodiff.hpp"

namespace hybridnet {

struct ConvSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
};

// Output extent of a convolution along one axis. Throws SpecError unless the
// geometry yields a positive integer.
std::size_t conv_output_size(std::size_t input, std::size_t kernel, const ConvSpec& spec);

/// 2-D cross-correlation with zero padding and dilation.
///   input  N x C x H x W
///   weight O x C x K x K
///   bias   O
/// out[n,o,y,x] = bias[o] + sum_{c,i,j} input[n,c,y*s-p+i*d, x*s-p+j*d] * weight[o,c,i,j]
Var conv2d(const Var& input, const Var& weight, const Var& bias, const ConvSpec& spec);

// Window max over N x C x H x W. Gradient goes to the first (row-major)
// maximum of each window.
Var max_pool2d(const Var& input, std::size_t kernel = 2, std::size_t stride = 2);

// Align-corners bilinear resampling of N x C x H x W.
Var bilinear_resize(const Var& input, std::size_t out_h, std::size_t out_w);

// input N x F, weight G x F, bias G -> N x G.
Var linear(const Var& input, const Var& weight, const Var& bias);

Var relu(const Var& input);
Var softplus(const Var& input);

// Stacks rank-4 tensors along axis 1.
Var concat_channels(std::span<const Var> inputs);

Var reshape(const Var& input, Shape dims);
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sum(const Var& a);

// sum_i weights[i] * terms[i] over scalar terms.
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

/// While an instance is alive, relu and max_pool2d fold their branch choices
/// (active masks, window argmaxes) into signature(). Two forward passes with
/// equal signatures took the same linear piece. Not reentrant.
class BranchRecorder {
 public:
  BranchRecorder();
  ~BranchRecorder();
  BranchRecorder(const BranchRecorder&) = delete;
  BranchRecorder& operator=(const BranchRecorder&) = delete;

  std::uint64_t signature() const { return hash_; }
  void reset() { hash_ = kOffset; }
  void fold(std::uint64_t value);

 private:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ull;
  std::uint64_t hash_ = kOffset;
};

}  // namespace hybridnet
