#include "tadispatch/simplex.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tad {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-9;
constexpr double kFeasTol = 1e-7;

struct Tableau {
  int m = 0;       // constraint rows
  int n = 0;       // columns excluding rhs
  int art_begin = 0;  // first artificial column
  std::vector<std::vector<double>> a;  // m rows x (n + 1), last column rhs
  std::vector<double> cost;            // n + 1, last entry holds -objective
  std::vector<int> basis;              // basic variable per row

  void pivot(int row, int col) {
    const double piv = a[static_cast<size_t>(row)][static_cast<size_t>(col)];
    auto& prow = a[static_cast<size_t>(row)];
    for (double& v : prow) v /= piv;
    for (int r = 0; r < m; ++r) {
      if (r == row) continue;
      auto& targ = a[static_cast<size_t>(r)];
      const double f = targ[static_cast<size_t>(col)];
      if (std::abs(f) < 1e-300) continue;
      for (int c = 0; c <= n; ++c) targ[static_cast<size_t>(c)] -= f * prow[static_cast<size_t>(c)];
    }
    const double f = cost[static_cast<size_t>(col)];
    if (std::abs(f) > 0.0)
      for (int c = 0; c <= n; ++c) cost[static_cast<size_t>(c)] -= f * prow[static_cast<size_t>(c)];
    basis[static_cast<size_t>(row)] = col;
  }

  // Bland's rule: smallest eligible entering index; leaving row by min
  // ratio, ties to the smallest basis index. `allowed_end` excludes columns
  // (artificials in phase 2).
  LpStatus iterate(int allowed_end) {
    const long max_iters = 2000L + 200L * (static_cast<long>(m) + n);
    for (long it = 0; it < max_iters; ++it) {
      int enter = -1;
      for (int c = 0; c < allowed_end; ++c)
        if (cost[static_cast<size_t>(c)] < -kCostTol) {
          enter = c;
          break;
        }
      if (enter < 0) return LpStatus::optimal;

      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int r = 0; r < m; ++r) {
        const double arc = a[static_cast<size_t>(r)][static_cast<size_t>(enter)];
        if (arc > kPivotTol) {
          const double ratio = a[static_cast<size_t>(r)][static_cast<size_t>(n)] / arc;
          if (ratio < best_ratio - 1e-12 ||
              (ratio < best_ratio + 1e-12 &&
               (leave < 0 || basis[static_cast<size_t>(r)] < basis[static_cast<size_t>(leave)])))
          {
            best_ratio = ratio;
            leave = r;
          }
        }
      }
      if (leave < 0) return LpStatus::unbounded;
      pivot(leave, enter);
    }
    return LpStatus::iteration_limit;
  }
};

}  // namespace

LpSolution solve_lp(const LpProblem& problem) {
  const int m = static_cast<int>(problem.rows.size());
  const int nv = problem.num_vars;
  for (const auto& row : problem.rows)
    if (static_cast<int>(row.size()) != nv)
      throw std::invalid_argument("constraint row width mismatch");
  if (static_cast<int>(problem.objective.size()) != nv)
    throw std::invalid_argument("objective width mismatch");

  // Column layout: structural | slack/surplus | artificial | rhs.
  int num_slack = 0;
  for (auto s : problem.sense)
    if (s != ConstraintSense::eq) ++num_slack;

  Tableau t;
  t.m = m;
  t.art_begin = nv + num_slack;
  t.n = t.art_begin + m;  // one artificial column per row, unused ones stay zero
  t.a.assign(static_cast<size_t>(m), std::vector<double>(static_cast<size_t>(t.n) + 1, 0.0));
  t.basis.assign(static_cast<size_t>(m), -1);

  int slack_idx = nv;
  for (int r = 0; r < m; ++r) {
    auto& row = t.a[static_cast<size_t>(r)];
    double rhs = problem.rhs[static_cast<size_t>(r)];
    ConstraintSense s = problem.sense[static_cast<size_t>(r)];
    double sign = 1.0;
    if (rhs < 0.0) {  // normalize to nonnegative rhs
      sign = -1.0;
      rhs = -rhs;
      if (s == ConstraintSense::le) s = ConstraintSense::ge;
      else if (s == ConstraintSense::ge) s = ConstraintSense::le;
    }
    for (int c = 0; c < nv; ++c)
      row[static_cast<size_t>(c)] = sign * problem.rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
    row[static_cast<size_t>(t.n)] = rhs;

    if (s == ConstraintSense::le) {
      row[static_cast<size_t>(slack_idx)] = 1.0;
      t.basis[static_cast<size_t>(r)] = slack_idx++;
    } else {
      if (s == ConstraintSense::ge) row[static_cast<size_t>(slack_idx++)] = -1.0;
      row[static_cast<size_t>(t.art_begin + r)] = 1.0;
      t.basis[static_cast<size_t>(r)] = t.art_begin + r;
    }
  }

  // Phase 1: minimize the sum of artificials.
  t.cost.assign(static_cast<size_t>(t.n) + 1, 0.0);
  for (int c = t.art_begin; c < t.n; ++c) t.cost[static_cast<size_t>(c)] = 1.0;
  for (int r = 0; r < m; ++r)
    if (t.basis[static_cast<size_t>(r)] >= t.art_begin)
      for (int c = 0; c <= t.n; ++c)
        t.cost[static_cast<size_t>(c)] -= t.a[static_cast<size_t>(r)][static_cast<size_t>(c)];

  LpSolution sol;
  LpStatus st = t.iterate(t.n);
  if (st != LpStatus::optimal) {
    sol.status = st == LpStatus::unbounded ? LpStatus::infeasible : st;
    return sol;
  }
  if (-t.cost[static_cast<size_t>(t.n)] > kFeasTol) {
    sol.status = LpStatus::infeasible;
    return sol;
  }

  // Drive artificials out of the basis where possible; rows that offer no
  // pivot are redundant and keep a zero-valued artificial.
  for (int r = 0; r < m; ++r) {
    if (t.basis[static_cast<size_t>(r)] < t.art_begin) continue;
    for (int c = 0; c < t.art_begin; ++c)
      if (std::abs(t.a[static_cast<size_t>(r)][static_cast<size_t>(c)]) > kPivotTol) {
        t.pivot(r, c);
        break;
      }
  }

  // Phase 2 with the real objective, artificial columns barred.
  t.cost.assign(static_cast<size_t>(t.n) + 1, 0.0);
  for (int c = 0; c < nv; ++c) t.cost[static_cast<size_t>(c)] = problem.objective[static_cast<size_t>(c)];
  for (int r = 0; r < m; ++r) {
    const int b = t.basis[static_cast<size_t>(r)];
    const double cb = b < nv ? problem.objective[static_cast<size_t>(b)] : 0.0;
    if (cb != 0.0)
      for (int c = 0; c <= t.n; ++c)
        t.cost[static_cast<size_t>(c)] -= cb * t.a[static_cast<size_t>(r)][static_cast<size_t>(c)];
  }
  st = t.iterate(t.art_begin);
  if (st != LpStatus::optimal) {
    sol.status = st;
    return sol;
  }

  sol.status = LpStatus::optimal;
  sol.x.assign(static_cast<size_t>(nv), 0.0);
  for (int r = 0; r < m; ++r) {
    const int b = t.basis[static_cast<size_t>(r)];
    if (b < nv) sol.x[static_cast<size_t>(b)] = t.a[static_cast<size_t>(r)][static_cast<size_t>(t.n)];
  }
  sol.objective = 0.0;
  for (int c = 0; c < nv; ++c) sol.objective += problem.objective[static_cast<size_t>(c)] * sol.x[static_cast<size_t>(c)];
  return sol;
}

}  // namespace tad
