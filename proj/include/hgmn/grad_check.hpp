#pragma once

#include "hgmn/tape.hpp"
#include "hgmn/types.hpp"

#include <functional>
#include <vector>

namespace hgmn::ad {

/// Builds a scalar loss from leaves the callback creates on the given tape.
/// The callback must register every differentiated point via the provided
/// leaf-maker so the checker can perturb it.
struct GradCheckProblem {
  /// f(tape, points) -> scalar Var; points[i] wraps point_values[i].
  std::function<Var(Tape&, const std::vector<Var>&)> f;
  std::vector<Matrix> point_values;
};

/// Max over all coordinates of |analytic - numeric| / max(1, |numeric|),
/// numeric gradients by central differences with step eps.
double grad_check(const GradCheckProblem& problem, double eps = 1e-5);

}  // namespace hgmn::ad
