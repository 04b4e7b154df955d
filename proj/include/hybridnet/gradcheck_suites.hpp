#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "hybridnet/grad_check.hpp"

namespace hybridnet {

enum class GradScope { ops, losses, model };

GradScope parse_grad_scope(std::string_view name);
std::string_view grad_scope_name(GradScope scope);

struct GradTarget {
  std::string name;
  GradCheckResult result;
  double threshold = 0.0;

  bool passed() const { return result.max_relative_error < threshold; }
};

// Thresholds: 1e-6 for ops and losses, 1e-4 for the whole model (epsilon 1e-4).
inline constexpr double kOpThreshold = 1e-6;
inline constexpr double kModelThreshold = 1e-4;

/// Seeded finite-difference checks. "ops" covers every differentiable op
/// (including strided and dilated convolutions), "losses" every loss and the
/// normalization, "model" the toy network at 32x64 through the hybrid loss.
std::vector<GradTarget> run_gradcheck_suite(GradScope scope, std::uint64_t seed = 0);

}  // namespace hybridnet
