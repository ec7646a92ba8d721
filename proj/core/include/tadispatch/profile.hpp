#pragma once

#include <vector>

#include "tadispatch/matrix.hpp"
#include "tadispatch/topology.hpp"

namespace tad {

// Default lower clamp for the self-link (local copy) inverse bandwidth.
inline constexpr double kDefaultSelfBetaFloor = 0.1;  // us/MB

// Measured point-to-point link costs: alpha in microseconds, beta in
// microseconds per (decimal) megabyte.
struct LinkProfile {
  Matrix alpha;  // P x P
  Matrix beta;   // P x P
  double self_beta_floor = kDefaultSelfBetaFloor;

  int device_count() const { return alpha.rows(); }
  void validate() const;
  bool is_homogeneous(double rel_tol = 1e-6) const;
};

// Level-smoothed profile over a symmetric tree: within each device's
// level-l group every link shares one alpha_l / beta_l value.
struct HierarchicalProfile {
  Matrix alpha_hat;                             // P x P
  Matrix beta_hat;                              // P x P
  std::vector<double> level_alpha;              // per tree level
  std::vector<double> level_beta;               // per tree level
  std::vector<std::vector<std::vector<int>>> groups;  // [device][level] -> members

  int device_count() const { return alpha_hat.rows(); }
};

// Averages raw link values per (device, level) group of the tree, producing
// the hierarchical alpha_hat/beta_hat matrices. The diagonal becomes the
// mean measured self cost, clamped at raw.self_beta_floor. Requires a
// symmetric tree (run merge_asymmetric first for asymmetric ones).
HierarchicalProfile smooth_profile(const Topology& topo, const LinkProfile& raw);

// Effective point-to-point profile of a ring: for each pair the better of
// the two ring directions is chosen, comparing bottleneck beta first, then
// total alpha, then preferring the clockwise direction. Along the chosen
// path, beta is the bottleneck (max edge) and alpha accumulates per hop.
LinkProfile ring_effective_profile(const Topology& topo, const std::vector<double>& edge_alpha,
                                   const std::vector<double>& edge_beta);

// Completes a partially measured profile (missing entries are NaN):
// symmetry first, then the level average over the tree when one is given
// (global off-diagonal mean otherwise), diagonal from measured self links
// or min off-diagonal beta / 10, all clamped at self_beta_floor.
LinkProfile fill_partial_profile(const Matrix& alpha, const Matrix& beta, const Topology* topo,
                                 double self_beta_floor = kDefaultSelfBetaFloor);

}  // namespace tad
