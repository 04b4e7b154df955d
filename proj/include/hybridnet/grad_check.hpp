#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "hybridnet/autodiff.hpp"

namespace hybridnet {

struct GradCheckOptions {
  double epsilon = 1e-4;
  // 0 checks every element; otherwise at most this many evenly spaced
  // elements per parameter tensor.
  std::size_t max_elements_per_param = 0;
  // Skip elements whose +/- epsilon probes change a relu mask or pooling
  // argmax: the central difference is not a derivative estimate there.
  // A sampled element that is skipped is replaced by the next index.
  bool skip_kinks = false;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t elements_checked = 0;
  std::size_t kinks_skipped = 0;
};

// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

/// Compares the reverse-mode gradient of `f` against central differences
/// (f(θ+ε) − f(θ−ε)) / 2ε for each checked element of `params`. `f` must be
/// deterministic and return a scalar. Parameter grads are zeroed on entry and
/// hold the analytic gradient on return.
GradCheckResult grad_check(const std::function<Var()>& f, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

double grad_check(const std::function<Var()>& f, std::span<Parameter* const> params, double epsilon);

}  // namespace hybridnet
