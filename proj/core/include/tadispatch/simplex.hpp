#pragma once

#include <vector>

namespace tad {

enum class ConstraintSense { le, eq, ge };

// minimize objective . x  subject to the listed constraints and x >= 0.
struct LpProblem {
  int num_vars = 0;
  std::vector<double> objective;
  std::vector<std::vector<double>> rows;
  std::vector<double> rhs;
  std::vector<ConstraintSense> sense;

  void add_constraint(std::vector<double> coeffs, ConstraintSense s, double b) {
    rows.push_back(std::move(coeffs));
    sense.push_back(s);
    rhs.push_back(b);
  }
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  double objective = 0.0;
  std::vector<double> x;
};

// Dense two-phase primal simplex with Bland's anti-cycling rule. Intended
// for small, well-scaled instances; handles redundant equality rows.
LpSolution solve_lp(const LpProblem& problem);

}  // namespace tad
