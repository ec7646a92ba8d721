#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tadispatch/matrix.hpp"

namespace tad {

// Gate network parameters: per-token expert logits are x * W.
struct GateState {
  Matrix W;  // d x N
  int k = 1;
  uint64_t rng_seed = 0;
};

// Row-wise softmax of x * W with max-subtraction. Throws on non-finite
// logits.
Matrix gate_forward(const Matrix& x, const Matrix& W);
Matrix softmax_rows(const Matrix& logits);

struct Assignment {
  int expert = -1;
  double gate_value = 0.0;  // combine weight: top-1 raw prob, top-k renormalized
  double score = 0.0;       // raw selection prob, used for capacity ordering
  bool kept = true;
};

// Routing outcome for one process.
struct RoutingResult {
  std::vector<std::vector<Assignment>> assignments;  // S x k
  std::vector<long long> counts;   // per expert, kept tokens
  std::vector<long long> dropped;  // per expert, dropped by capacity
  std::vector<double> mean_probs;  // column means of the softmax
};

enum class CapacityMode { none, global, local, local_proportional };

struct CapacityPolicy {
  CapacityMode mode = CapacityMode::none;
  double capacity_factor = 1.0;
  // Per-expert cap C = capacity_factor * k*S*P/N.
  double expert_capacity(int k, int S, int N, int P) const {
    return capacity_factor * static_cast<double>(k) * S * P / N;
  }
};

CapacityMode capacity_mode_from_string(const std::string& s);
std::string to_string(CapacityMode mode);

// Top-k routing for all P processes with capacity enforcement. Ties in the
// top-k pick the lower expert index; capacity keeps the highest scores,
// breaking ties by process then token index. local_proportional splits each
// expert's capacity across processes proportionally to c_hat (largest
// remainder rounding) and requires c_hat.
std::vector<RoutingResult> topk_route(const std::vector<Matrix>& probs_per_process, int k,
                                      const CapacityPolicy& policy,
                                      const Matrix* c_hat = nullptr);

// Single-process convenience wrapper.
RoutingResult topk_route(const Matrix& probs, int k, const CapacityPolicy& policy = {},
                         const Matrix* c_hat = nullptr);

// Rounds nonnegative reals to integers summing to `target`, largest
// remainders first (ties to the lower index).
std::vector<long long> largest_remainder_round(std::span<const double> values, long long target);

// Load-balance auxiliary loss: sum_e m_e * (c_e / S).
double loss_balance(const RoutingResult& result, int S);

enum class PenaltyNorm { sum_norm, softmax };

PenaltyNorm penalty_norm_from_string(const std::string& s);

// Penalty weights p = Norm(1 / c_hat_row). sum_norm scales reciprocals to
// sum to one; softmax(T) sharpens the penalty on low-bandwidth targets.
// temperature <= 0 selects the default T = mean(1 / c_hat_row).
std::vector<double> penalty_weights(std::span<const double> c_hat_row, PenaltyNorm norm,
                                    double temperature = 0.0);

// Topology-aware loss: N*P * sum_e p_e * m_e * (c_e / S).
double loss_topo(const RoutingResult& result, std::span<const double> penalty, int N, int P, int S);

// Gradient of an auxiliary loss w.r.t. W, treating counts as constants so
// the gradient flows through the mean probabilities only. Matches
// loss_balance for coeff_e = c_e/S^2 and loss_topo for N*P*p_e*c_e/S^2;
// helpers below build those coefficient vectors.
Matrix grad_aux_loss(const Matrix& x, const Matrix& probs, std::span<const double> coeff);
std::vector<double> balance_coefficients(const RoutingResult& result, int S);
std::vector<double> topo_coefficients(const RoutingResult& result, std::span<const double> penalty,
                                      int N, int P, int S);
Matrix grad_loss_balance(const Matrix& x, const Matrix& probs, const RoutingResult& result, int S);
Matrix grad_loss_topo(const Matrix& x, const Matrix& probs, const RoutingResult& result,
                      std::span<const double> penalty, int N, int P, int S);

}  // namespace tad
