#include "hybridnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "hybridnet/errors.hpp"
#include "hybridnet/ops.hpp"

namespace hybridnet {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult grad_check(const std::function<Var()>& f, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) throw ContractError("grad_check: epsilon must be positive");
  std::optional<BranchRecorder> recorder;
  if (options.skip_kinks) recorder.emplace();
  const auto eval = [&](std::uint64_t* signature) {
    if (recorder) recorder->reset();
    const double v = f().value().item();
    if (recorder) *signature = recorder->signature();
    return v;
  };

  zero_grads(params);
  if (recorder) recorder->reset();
  backward(f());
  const std::uint64_t base = recorder ? recorder->signature() : 0;

  GradCheckResult result;
  for (Parameter* p : params) {
    const std::size_t n = p->value.numel();
    const std::size_t m = options.max_elements_per_param == 0 ? n : std::min(n, options.max_elements_per_param);
    for (std::size_t k = 0; k < m; ++k) {
      // Candidates for sample k run up to the start of sample k + 1.
      const std::size_t first = k * n / m;
      const std::size_t last = (k + 1) * n / m;
      for (std::size_t i = first; i < last; ++i) {
        double& slot = p->value.mutable_data()[i];
        const double original = slot;
        std::uint64_t sig_plus = base, sig_minus = base;
        slot = original + options.epsilon;
        const double plus = eval(&sig_plus);
        slot = original - options.epsilon;
        const double minus = eval(&sig_minus);
        slot = original;
        if (sig_plus != base || sig_minus != base) {
          ++result.kinks_skipped;
          continue;
        }

        const double numeric = (plus - minus) / (2.0 * options.epsilon);
        const double analytic = p->grad[i];
        const double err = relative_error(analytic, numeric);
        ++result.elements_checked;
        if (result.elements_checked == 1 || err > result.max_relative_error) {
          result.max_relative_error = err;
          result.worst_parameter = p->name;
          result.worst_index = i;
          result.worst_analytic = analytic;
          result.worst_numeric = numeric;
        }
        if (m < n) break;
      }
    }
  }
  return result;
}

double grad_check(const std::function<Var()>& f, std::span<Parameter* const> params, double epsilon) {
  GradCheckOptions options;
  options.epsilon = epsilon;
  return grad_check(f, params, options).max_relative_error;
}

}  // namespace hybridnet
