// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mgpc/ad/param_store.hpp"
#include "mgpc/ad/tensor.hpp"

namespace mgpc::ad {

/// Builds a scalar loss on the given tape from the store's current values.
/// Must be deterministic.
using LossBuilder = std::function<Tensor(Tape&, ParamStore&)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Lower bound on the denominator of the relative error, so parameters
  /// whose true gradient vanishes are judged on absolute error.
  double denominator_floor = 1e-6;
  /// Check at most this many elements per parameter (evenly strided); 0 = all.
  std::size_t max_elements_per_param = 0;
  std::optional<std::string> corrupt_param;
  std::optional<std::string> corrupt_op;
};

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;
  double max_abs_analytic = 0.0;
  double max_abs_numeric = 0.0;
  /// max |analytic - numeric| / max(max|analytic|, max|numeric|, floor)
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double tolerance = 0.0;

  bool passed() const;
  std::string to_string() const;
};

/// Central finite differences against back-propagated gradients for every
/// parameter in the store. Parameter values are restored afterwards and the
/// store's gradients hold the analytic result.
GradCheckReport grad_check(const LossBuilder& loss, ParamStore& store, const GradCheckOptions& options = {});

}  // namespace mgpc::ad
