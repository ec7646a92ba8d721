#pragma once

#include <string>
#include <vector>

#include "tadispatch/dispatch.hpp"
#include "tadispatch/matrix.hpp"
#include "tadispatch/profile.hpp"
#include "tadispatch/profile_io.hpp"

namespace tad {

// Cost breakdown of one global exchange. bottleneck_us is the slowest of
// the P*P point-to-point deliveries; size_exchange_us covers the optional
// latency-only round used to agree on chunk sizes beforehand.
struct CostReport {
  Matrix pair_cost_us;                    // P x P
  double bottleneck_us = 0.0;             // max over pair_cost_us
  std::vector<double> per_device_send_us; // max over the device's row
  std::vector<double> per_device_recv_us; // max over the device's column
  double total_bytes = 0.0;
  double size_exchange_us = 0.0;
  double total_estimate_us = 0.0;         // bottleneck + size exchange
};

// alpha_ij + beta_ij * (tokens i sends to device j) * d * b, in microseconds
// with the payload converted to MB.
double pair_cost(const Matrix& alpha, const Matrix& beta, const DispatchMatrix& dm, int i, int j);

// Evaluates all P*P deliveries. extra_alpha_rounds adds that many
// latency-only all-to-all rounds (max alpha each) to the total estimate.
CostReport exchange_cost(const Matrix& alpha, const Matrix& beta, const DispatchMatrix& dm,
                         int extra_alpha_rounds = 0);

inline CostReport exchange_cost(const LinkProfile& p, const DispatchMatrix& dm, int rounds = 0) {
  return exchange_cost(p.alpha, p.beta, dm, rounds);
}
inline CostReport exchange_cost(const HierarchicalProfile& p, const DispatchMatrix& dm,
                                int rounds = 0) {
  return exchange_cost(p.alpha_hat, p.beta_hat, dm, rounds);
}

// Per-pair least squares fit of time = alpha + beta * size. Pairs observed
// at a single message size get alpha = 0 and beta = mean(time/size); fitted
// alpha is clamped at zero (beta refit accordingly). Unobserved pairs stay
// NaN in the returned matrices.
struct FittedProfile {
  Matrix alpha;
  Matrix beta;
};

FittedProfile fit_profile(const std::vector<TransferSample>& samples, int device_count = 0);

void save_cost_report_json(const std::string& path, const CostReport& report);

}  // namespace tad
