#include "tadispatch/profile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tadispatch/errors.hpp"

namespace tad {

void LinkProfile::validate() const {
  const int p = alpha.rows();
  if (alpha.cols() != p || beta.rows() != p || beta.cols() != p)
    throw ValidationError("profile matrices must be square with matching sides");
  if (self_beta_floor <= 0.0) throw ValidationError("self_beta_floor must be positive");
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      if (!(alpha.at(i, j) >= 0.0) || !(beta.at(i, j) >= 0.0))
        throw ValidationError("profile entries must be finite and nonnegative");
      if (i == j && beta.at(i, j) < self_beta_floor)
        throw ValidationError("diagonal beta below self_beta_floor");
    }
}

bool LinkProfile::is_homogeneous(double rel_tol) const {
  const int p = device_count();
  if (p < 2) return true;
  double amin = std::numeric_limits<double>::infinity(), amax = 0.0;
  double bmin = std::numeric_limits<double>::infinity(), bmax = 0.0;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      if (i == j) continue;
      amin = std::min(amin, alpha.at(i, j));
      amax = std::max(amax, alpha.at(i, j));
      bmin = std::min(bmin, beta.at(i, j));
      bmax = std::max(bmax, beta.at(i, j));
    }
  if (bmax - bmin > rel_tol * std::max(bmax, 1e-300)) return false;
  if (amax - amin > rel_tol * std::max(amax, 1e-300)) return false;
  return true;
}

HierarchicalProfile smooth_profile(const Topology& topo, const LinkProfile& raw) {
  if (topo.kind != TopologyKind::symmetric_tree)
    throw ValidationError("smooth_profile requires a symmetric tree (merge asymmetric trees first)");
  const int p = topo.device_count;
  if (raw.device_count() != p || raw.beta.cols() != p)
    throw ValidationError("profile side does not match topology device count");
  raw.validate();

  HierarchicalProfile out;
  out.groups.reserve(static_cast<size_t>(p));
  for (int i = 0; i < p; ++i) out.groups.push_back(device_groups(topo, i));

  const size_t num_levels = out.groups[0].size();
  out.level_alpha.assign(num_levels, 0.0);
  out.level_beta.assign(num_levels, 0.0);

  // Plain mean over all ordered pairs (i, j in G_l^i, j != i).
  std::vector<long long> pair_count(num_levels, 0);
  for (int i = 0; i < p; ++i) {
    for (size_t l = 0; l < num_levels; ++l) {
      for (int j : out.groups[i][l]) {
        if (j == i) continue;
        out.level_alpha[l] += raw.alpha.at(i, j);
        out.level_beta[l] += raw.beta.at(i, j);
        ++pair_count[l];
      }
    }
  }
  for (size_t l = 0; l < num_levels; ++l) {
    if (pair_count[l] == 0) {
      if (l == 0 && topo.levels.back() == 1) continue;  // leaf groups of one device
      throw ValidationError("empty level group while smoothing");
    }
    out.level_alpha[l] /= static_cast<double>(pair_count[l]);
    out.level_beta[l] /= static_cast<double>(pair_count[l]);
  }

  double diag_alpha = 0.0, diag_beta = 0.0;
  for (int i = 0; i < p; ++i) {
    diag_alpha += raw.alpha.at(i, i);
    diag_beta += raw.beta.at(i, i);
  }
  diag_alpha /= p;
  diag_beta = std::max(diag_beta / p, raw.self_beta_floor);

  out.alpha_hat = Matrix(p, p);
  out.beta_hat = Matrix(p, p);
  for (int i = 0; i < p; ++i) {
    out.alpha_hat.at(i, i) = diag_alpha;
    out.beta_hat.at(i, i) = diag_beta;
    for (size_t l = 0; l < num_levels; ++l)
      for (int j : out.groups[i][l]) {
        if (j == i) continue;
        out.alpha_hat.at(i, j) = out.level_alpha[l];
        out.beta_hat.at(i, j) = out.level_beta[l];
      }
  }
  return out;
}

LinkProfile ring_effective_profile(const Topology& topo, const std::vector<double>& edge_alpha,
                                   const std::vector<double>& edge_beta) {
  if (topo.kind != TopologyKind::ring) throw ValidationError("ring_effective_profile requires a ring");
  const int p = topo.device_count;
  if (static_cast<int>(edge_alpha.size()) != p || static_cast<int>(edge_beta.size()) != p)
    throw ValidationError("ring expects exactly P edge values");
  for (int e = 0; e < p; ++e)
    if (!(edge_alpha[e] >= 0.0) || !(edge_beta[e] > 0.0))
      throw ValidationError("ring edge values must be positive (alpha may be zero)");

  // position of each device along the ring
  std::vector<int> pos(static_cast<size_t>(p));
  for (int t = 0; t < p; ++t) pos[static_cast<size_t>(topo.device_order[t])] = t;

  LinkProfile out;
  out.alpha = Matrix(p, p);
  out.beta = Matrix(p, p);

  double min_beta = std::numeric_limits<double>::infinity();
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      if (i == j) continue;
      // Clockwise walk: edge t joins positions t and t+1.
      double cw_alpha = 0.0, cw_beta = 0.0;
      for (int t = pos[static_cast<size_t>(i)]; t != pos[static_cast<size_t>(j)]; t = (t + 1) % p) {
        cw_alpha += edge_alpha[static_cast<size_t>(t)];
        cw_beta = std::max(cw_beta, edge_beta[static_cast<size_t>(t)]);
      }
      double ccw_alpha = 0.0, ccw_beta = 0.0;
      for (int t = pos[static_cast<size_t>(i)]; t != pos[static_cast<size_t>(j)];) {
        t = (t + p - 1) % p;
        ccw_alpha += edge_alpha[static_cast<size_t>(t)];
        ccw_beta = std::max(ccw_beta, edge_beta[static_cast<size_t>(t)]);
      }
      // Smaller bottleneck wins, then smaller total latency, then clockwise.
      const bool take_ccw =
          ccw_beta < cw_beta || (ccw_beta == cw_beta && ccw_alpha < cw_alpha);
      out.alpha.at(i, j) = take_ccw ? ccw_alpha : cw_alpha;
      out.beta.at(i, j) = take_ccw ? ccw_beta : cw_beta;
      min_beta = std::min(min_beta, out.beta.at(i, j));
    }
  }
  const double self_beta = std::max(min_beta / 10.0, kDefaultSelfBetaFloor);
  for (int i = 0; i < p; ++i) out.beta.at(i, i) = self_beta;
  return out;
}

namespace {

bool missing(double v) { return std::isnan(v); }

// Mean of present values among the index pairs, or NaN.
double mean_present(const Matrix& m, const std::vector<std::pair<int, int>>& pairs) {
  double sum = 0.0;
  long long n = 0;
  for (auto [i, j] : pairs) {
    if (missing(m.at(i, j))) continue;
    sum += m.at(i, j);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

LinkProfile fill_partial_profile(const Matrix& alpha, const Matrix& beta, const Topology* topo,
                                 double self_beta_floor) {
  const int p = alpha.rows();
  if (alpha.cols() != p || beta.rows() != p || beta.cols() != p)
    throw ValidationError("profile matrices must be square with matching sides");

  LinkProfile out;
  out.alpha = alpha;
  out.beta = beta;
  out.self_beta_floor = self_beta_floor;

  for (auto* m : {&out.alpha, &out.beta}) {
    // 1) symmetry
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j)
        if (missing(m->at(i, j)) && !missing(m->at(j, i))) m->at(i, j) = m->at(j, i);

    // 2) level average over the tree, or global off-diagonal mean
    std::vector<std::pair<int, int>> all_offdiag;
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j)
        if (i != j) all_offdiag.emplace_back(i, j);

    if (topo && topo->is_tree()) {
      const Topology merged =
          topo->kind == TopologyKind::asymmetric_tree ? merge_asymmetric(*topo) : *topo;
      std::vector<std::vector<std::vector<int>>> groups;
      for (int i = 0; i < p; ++i) groups.push_back(device_groups(merged, i));
      const size_t num_levels = groups[0].size();
      for (size_t l = 0; l < num_levels; ++l) {
        std::vector<std::pair<int, int>> level_pairs;
        for (int i = 0; i < p; ++i)
          for (int j : groups[i][l])
            if (j != i) level_pairs.emplace_back(i, j);
        const double avg = mean_present(*m, level_pairs);
        for (auto [i, j] : level_pairs)
          if (missing(m->at(i, j)) && !missing(avg)) m->at(i, j) = avg;
      }
    }
    const double global_avg = mean_present(*m, all_offdiag);
    for (auto [i, j] : all_offdiag)
      if (missing(m->at(i, j))) {
        if (missing(global_avg))
          throw ValidationError("profile has no measured off-diagonal entries");
        m->at(i, j) = global_avg;
      }
  }

  // 3) diagonal: measured self links, else min off-diagonal beta / 10
  std::vector<std::pair<int, int>> diag;
  for (int i = 0; i < p; ++i) diag.emplace_back(i, i);
  const double diag_alpha = mean_present(out.alpha, diag);
  const double diag_beta = mean_present(out.beta, diag);
  double min_offdiag_beta = std::numeric_limits<double>::infinity();
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j)
      if (i != j) min_offdiag_beta = std::min(min_offdiag_beta, out.beta.at(i, j));
  for (int i = 0; i < p; ++i) {
    if (missing(out.alpha.at(i, i))) out.alpha.at(i, i) = missing(diag_alpha) ? 0.0 : diag_alpha;
    if (missing(out.beta.at(i, i)))
      out.beta.at(i, i) = missing(diag_beta) ? min_offdiag_beta / 10.0 : diag_beta;
    out.beta.at(i, i) = std::max(out.beta.at(i, i), self_beta_floor);
  }
  out.validate();
  return out;
}

}  // namespace tad
