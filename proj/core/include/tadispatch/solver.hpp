#pragma once

#include <optional>
#include <string>

#include "tadispatch/dispatch.hpp"
#include "tadispatch/profile.hpp"
#include "tadispatch/topology.hpp"

namespace tad {

// Target dispatch pattern: how many tokens each process should send to each
// expert so that per-link costs even out.
struct TargetPattern {
  enum class Source { closed_form, lp_oracle };

  DispatchMatrix dispatch;
  Source source = Source::closed_form;
  FeasibilityReport feasibility;
};

std::string to_string(TargetPattern::Source s);

// Uniform target k*S/N; requires an (almost) homogeneous profile.
TargetPattern target_homogeneous(const LinkProfile& profile, const DispatchConfig& config);

// Bandwidth-proportional closed form: each row splits its k*S tokens across
// devices proportionally to 1/beta_hat, which equalizes every link cost of
// that row (latency ignored). Exact on symmetric-tree and ring profiles.
TargetPattern target_closed_form(const Matrix& beta_hat, const DispatchConfig& config);
TargetPattern target_closed_form(const HierarchicalProfile& profile, const DispatchConfig& config);

// Epigraph LP for the full min-max problem including latency terms:
// minimize t subject to alpha_ij + beta_ij * payload_ij <= t, both exchange
// constraints and c >= 0. Independent of the closed form; desk scale only
// (P*N <= 256).
TargetPattern lp_oracle(const Matrix& alpha, const Matrix& beta, const DispatchConfig& config);
TargetPattern lp_oracle(const HierarchicalProfile& profile, const DispatchConfig& config);

struct SolveOptions {
  bool use_lp = false;        // solve with the LP instead of the closed form
  bool compute_gap = false;   // also run the LP and report the closed-form gap
};

// End-to-end pipeline: homogeneous -> even target; trees -> merge if
// asymmetric, smooth, closed form; ring -> effective bottleneck profile,
// closed form. The LP path keeps latency terms.
struct SolveResult {
  TargetPattern pattern;
  bool merged = false;               // asymmetric tree was rewritten
  Topology solve_topology;           // topology actually solved on
  std::optional<HierarchicalProfile> smoothed;
  std::optional<double> lp_objective_us;
  std::optional<double> closed_form_gap;  // relative to the LP optimum
};

SolveResult solve_target(const Topology& topo, const LinkProfile& raw, const DispatchConfig& config,
                         const SolveOptions& options = {});

}  // namespace tad
