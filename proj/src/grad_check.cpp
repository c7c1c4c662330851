// SPDX-License-Identifier: Apache-2.0
#include "mgpc/ad/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace mgpc::ad {

bool GradCheckReport::passed() const {
  return std::all_of(params.begin(), params.end(), [](const ParamCheck& p) { return p.passed; });
}

std::string GradCheckReport::to_string() const {
  std::string out;
  char line[256];
  for (const ParamCheck& p : params) {
    std::snprintf(line, sizeof line, "%-4s %-48s n=%-6zu rel_err=%.3e |g|max=%.3e\n", p.passed ? "ok" : "FAIL",
                  p.name.c_str(), p.checked, p.max_rel_error, p.max_abs_analytic);
    out += line;
  }
  std::snprintf(line, sizeof line, "%s: %zu parameters at tolerance %.1e\n", passed() ? "PASS" : "FAIL",
                params.size(), tolerance);
  return out + line;
}

GradCheckReport grad_check(const LossBuilder& loss, ParamStore& store, const GradCheckOptions& options) {
  store.zero_grad();
  {
    Tape tape;
    if (options.corrupt_param) tape.corrupt_param(*options.corrupt_param);
    if (options.corrupt_op) tape.corrupt_op(*options.corrupt_op);
    Tensor l = loss(tape, store);
    tape.backward(l);
  }
  auto evaluate = [&]() {
    Tape tape;
    return loss(tape, store).item();
  };

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (auto& [name, param] : store) {
    ParamCheck check;
    check.name = name;
    const std::size_t n = param.value.size();
    const std::size_t stride =
        options.max_elements_per_param == 0 ? 1 : std::max<std::size_t>(1, n / options.max_elements_per_param);
    std::vector<double> numeric;
    std::vector<double> analytic;
    for (std::size_t i = 0; i < n; i += stride) {
      const double original = param.value[i];
      param.value[i] = original + options.step;
      const double up = evaluate();
      param.value[i] = original - options.step;
      const double down = evaluate();
      param.value[i] = original;
      numeric.push_back((up - down) / (2.0 * options.step));
      analytic.push_back(param.frozen ? 0.0 : param.grad[i]);
    }
    double max_diff = 0.0;
    for (std::size_t j = 0; j < numeric.size(); ++j) {
      check.max_abs_analytic = std::max(check.max_abs_analytic, std::abs(analytic[j]));
      check.max_abs_numeric = std::max(check.max_abs_numeric, std::abs(numeric[j]));
      max_diff = std::max(max_diff, std::abs(analytic[j] - numeric[j]));
    }
    const double denom = std::max({check.max_abs_analytic, check.max_abs_numeric, options.denominator_floor});
    check.checked = numeric.size();
    check.max_rel_error = max_diff / denom;
    check.passed = std::isfinite(check.max_rel_error) && check.max_rel_error < options.tolerance;
    report.params.push_back(std::move(check));
  }
  return report;
}

}  // namespace mgpc::ad
