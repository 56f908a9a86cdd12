#include "hgmn/grad_check.hpp"

#include <cmath>

namespace hgmn::ad {

namespace {

double eval_at(const GradCheckProblem& problem, const std::vector<Matrix>& values) {
  Tape tape;
  std::vector<Var> points;
  points.reserve(values.size());
  for (const auto& v : values) points.push_back(tape.leaf(v, /*requires_grad=*/true));
  Var loss = problem.f(tape, points);
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("grad_check: objective must be scalar");
  }
  return loss.value()(0, 0);
}

}  // namespace

double grad_check(const GradCheckProblem& problem, double eps) {
  // Analytic pass.
  Tape tape;
  std::vector<Var> points;
  for (const auto& v : problem.point_values) points.push_back(tape.leaf(v, true));
  Var loss = problem.f(tape, points);
  tape.backward(loss);
  std::vector<Matrix> analytic;
  analytic.reserve(points.size());
  for (const auto& p : points) analytic.push_back(tape.grad(p));

  double worst = 0.0;
  std::vector<Matrix> values = problem.point_values;
  for (std::size_t k = 0; k < values.size(); ++k) {
    for (Eigen::Index i = 0; i < values[k].rows(); ++i) {
      for (Eigen::Index j = 0; j < values[k].cols(); ++j) {
        const double saved = values[k](i, j);
        values[k](i, j) = saved + eps;
        const double hi = eval_at(problem, values);
        values[k](i, j) = saved - eps;
        const double lo = eval_at(problem, values);
        values[k](i, j) = saved;
        const double numeric = (hi - lo) / (2.0 * eps);
        const double err = std::abs(analytic[k](i, j) - numeric) /
                           std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

}  // namespace hgmn::ad
