#include "tadispatch/solver.hpp"

#include <cmath>

#include "tadispatch/comm_cost.hpp"
#include "tadispatch/errors.hpp"
#include "tadispatch/simplex.hpp"

namespace tad {

std::string to_string(TargetPattern::Source s) {
  return s == TargetPattern::Source::closed_form ? "closed_form" : "lp_oracle";
}

TargetPattern target_homogeneous(const LinkProfile& profile, const DispatchConfig& config) {
  config.validate();
  if (profile.device_count() != config.P)
    throw ValidationError("profile side does not match P");
  if (!profile.is_homogeneous())
    throw ValidationError("profile is not homogeneous within tolerance");
  TargetPattern t;
  t.dispatch = even_pattern(config);
  t.source = TargetPattern::Source::closed_form;
  t.feasibility = check_constraints(t.dispatch.c, config);
  return t;
}

TargetPattern target_closed_form(const Matrix& beta_hat, const DispatchConfig& config) {
  config.validate();
  const int p = config.P;
  if (beta_hat.rows() != p || beta_hat.cols() != p)
    throw ValidationError("beta_hat side does not match P");
  for (double v : beta_hat.data())
    if (!(v > 0.0)) throw ValidationError("closed form requires strictly positive beta_hat");

  const int experts_per_device = config.experts_per_device();
  TargetPattern t;
  t.dispatch.config = config;
  t.dispatch.c = Matrix(p, config.N);
  for (int i = 0; i < p; ++i) {
    double inv_sum = 0.0;
    for (int j = 0; j < p; ++j) inv_sum += 1.0 / beta_hat.at(i, j);
    for (int e = 0; e < config.N; ++e) {
      const int dev = e / experts_per_device;
      t.dispatch.c.at(i, e) =
          config.tokens_per_row() / (experts_per_device * inv_sum * beta_hat.at(i, dev));
    }
  }
  t.source = TargetPattern::Source::closed_form;
  t.feasibility = check_constraints(t.dispatch.c, config);
  return t;
}

TargetPattern target_closed_form(const HierarchicalProfile& profile, const DispatchConfig& config) {
  return target_closed_form(profile.beta_hat, config);
}

TargetPattern lp_oracle(const Matrix& alpha, const Matrix& beta, const DispatchConfig& config) {
  config.validate();
  const int p = config.P;
  if (alpha.rows() != p || beta.rows() != p) throw ValidationError("profile side does not match P");
  if (config.P * config.N > 256)
    throw ValidationError("lp_oracle is limited to P*N <= 256");

  // Experts on one device are interchangeable, so solve on the P*P matrix
  // of per-device payloads s_ij and split each payload evenly afterwards.
  // Variables: x0 = t (epigraph), then s_ij row-major.
  const double mb = config.mb_per_token();
  const double row_target = config.tokens_per_row();

  LpProblem lp;
  lp.num_vars = 1 + p * p;
  lp.objective.assign(static_cast<size_t>(lp.num_vars), 0.0);
  lp.objective[0] = 1.0;

  const auto var = [p](int i, int j) { return 1 + i * p + j; };
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      std::vector<double> row(static_cast<size_t>(lp.num_vars), 0.0);
      row[0] = -1.0;
      row[static_cast<size_t>(var(i, j))] = beta.at(i, j) * mb;
      lp.add_constraint(std::move(row), ConstraintSense::le, -alpha.at(i, j));
    }
  for (int i = 0; i < p; ++i) {
    std::vector<double> row(static_cast<size_t>(lp.num_vars), 0.0);
    for (int j = 0; j < p; ++j) row[static_cast<size_t>(var(i, j))] = 1.0;
    lp.add_constraint(std::move(row), ConstraintSense::eq, row_target);
  }
  for (int j = 0; j < p; ++j) {
    std::vector<double> row(static_cast<size_t>(lp.num_vars), 0.0);
    for (int i = 0; i < p; ++i) row[static_cast<size_t>(var(i, j))] = 1.0;
    lp.add_constraint(std::move(row), ConstraintSense::eq, row_target);
  }

  const LpSolution sol = solve_lp(lp);
  if (sol.status == LpStatus::infeasible)
    throw ValidationError("dispatch LP is infeasible");
  if (sol.status != LpStatus::optimal)
    throw std::runtime_error("dispatch LP did not converge");

  const int experts_per_device = config.experts_per_device();
  TargetPattern t;
  t.dispatch.config = config;
  t.dispatch.c = Matrix(p, config.N);
  for (int i = 0; i < p; ++i)
    for (int e = 0; e < config.N; ++e) {
      const double s = sol.x[static_cast<size_t>(var(i, e / experts_per_device))];
      t.dispatch.c.at(i, e) = std::max(s, 0.0) / experts_per_device;
    }
  t.source = TargetPattern::Source::lp_oracle;
  t.feasibility = check_constraints(t.dispatch.c, config);
  return t;
}

TargetPattern lp_oracle(const HierarchicalProfile& profile, const DispatchConfig& config) {
  return lp_oracle(profile.alpha_hat, profile.beta_hat, config);
}

SolveResult solve_target(const Topology& topo, const LinkProfile& raw, const DispatchConfig& config,
                         const SolveOptions& options) {
  config.validate();
  if (topo.device_count != config.P)
    throw ValidationError("topology device count does not match P");

  SolveResult res;
  res.solve_topology = topo;

  Matrix alpha = raw.alpha;
  Matrix beta = raw.beta;

  switch (topo.kind) {
    case TopologyKind::homogeneous: {
      if (!options.use_lp) {
        res.pattern = target_homogeneous(raw, config);
        if (options.compute_gap) {
          const TargetPattern lp = lp_oracle(raw.alpha, raw.beta, config);
          res.lp_objective_us = exchange_cost(raw, lp.dispatch).bottleneck_us;
        }
      } else {
        res.pattern = lp_oracle(raw.alpha, raw.beta, config);
      }
      break;
    }
    case TopologyKind::symmetric_tree:
    case TopologyKind::asymmetric_tree: {
      if (topo.kind == TopologyKind::asymmetric_tree) {
        res.solve_topology = merge_asymmetric(topo);
        res.merged = true;
      }
      res.smoothed = smooth_profile(res.solve_topology, raw);
      alpha = res.smoothed->alpha_hat;
      beta = res.smoothed->beta_hat;
      res.pattern = options.use_lp ? lp_oracle(alpha, beta, config)
                                   : target_closed_form(beta, config);
      break;
    }
    case TopologyKind::ring: {
      if (!topo.ring_edge_beta_us_per_mb.empty()) {
        std::vector<double> edge_alpha = topo.ring_edge_alpha_us;
        if (edge_alpha.empty()) edge_alpha.assign(topo.ring_edge_beta_us_per_mb.size(), 0.0);
        const LinkProfile eff =
            ring_effective_profile(topo, edge_alpha, topo.ring_edge_beta_us_per_mb);
        alpha = eff.alpha;
        beta = eff.beta;
      }
      res.pattern = options.use_lp ? lp_oracle(alpha, beta, config)
                                   : target_closed_form(beta, config);
      break;
    }
  }

  if (options.compute_gap && topo.kind != TopologyKind::homogeneous) {
    const TargetPattern lp = lp_oracle(alpha, beta, config);
    const double lp_bottleneck = exchange_cost(alpha, beta, lp.dispatch).bottleneck_us;
    res.lp_objective_us = lp_bottleneck;
    if (res.pattern.source == TargetPattern::Source::closed_form && lp_bottleneck > 0.0) {
      const double cf_bottleneck = exchange_cost(alpha, beta, res.pattern.dispatch).bottleneck_us;
      res.closed_form_gap = cf_bottleneck / lp_bottleneck - 1.0;
    }
  }
  return res;
}

}  // namespace tad
