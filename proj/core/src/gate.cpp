#include "tadispatch/gate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tadispatch/errors.hpp"

namespace tad {

Matrix softmax_rows(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (int s = 0; s < logits.rows(); ++s) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double v : logits.row(s)) {
      if (!std::isfinite(v)) throw ValidationError("non-finite gate logit");
      max_logit = std::max(max_logit, v);
    }
    double denom = 0.0;
    for (int e = 0; e < logits.cols(); ++e) {
      probs.at(s, e) = std::exp(logits.at(s, e) - max_logit);
      denom += probs.at(s, e);
    }
    for (int e = 0; e < logits.cols(); ++e) probs.at(s, e) /= denom;
  }
  return probs;
}

Matrix gate_forward(const Matrix& x, const Matrix& W) {
  return softmax_rows(matmul(x, W));
}

CapacityMode capacity_mode_from_string(const std::string& s) {
  if (s == "none") return CapacityMode::none;
  if (s == "global") return CapacityMode::global;
  if (s == "local") return CapacityMode::local;
  if (s == "proportional" || s == "local_proportional") return CapacityMode::local_proportional;
  throw ValidationError("unknown capacity mode: " + s);
}

std::string to_string(CapacityMode mode) {
  switch (mode) {
    case CapacityMode::none: return "none";
    case CapacityMode::global: return "global";
    case CapacityMode::local: return "local";
    case CapacityMode::local_proportional: return "proportional";
  }
  return "unknown";
}

std::vector<long long> largest_remainder_round(std::span<const double> values, long long target) {
  const size_t n = values.size();
  std::vector<long long> out(n, 0);
  std::vector<std::pair<double, size_t>> remainders;
  long long assigned = 0;
  for (size_t i = 0; i < n; ++i) {
    const double v = std::max(values[i], 0.0);
    out[i] = static_cast<long long>(std::floor(v + 1e-9));
    assigned += out[i];
    remainders.emplace_back(v - static_cast<double>(out[i]), i);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  long long leftover = target - assigned;
  for (size_t r = 0; leftover > 0 && r < n; ++r, --leftover) out[remainders[r].second] += 1;
  // Rounding up can overshoot only if the inputs already exceeded target.
  for (size_t r = n; leftover < 0 && r-- > 0;) {
    const size_t idx = remainders[r].second;
    if (out[idx] > 0) {
      out[idx] -= 1;
      ++leftover;
    }
  }
  return out;
}

namespace {

struct Pick {
  int process;
  int token;
  int slot;
  double score;
};

}  // namespace

std::vector<RoutingResult> topk_route(const std::vector<Matrix>& probs_per_process, int k,
                                      const CapacityPolicy& policy, const Matrix* c_hat) {
  if (probs_per_process.empty()) throw ValidationError("topk_route needs at least one process");
  const int P = static_cast<int>(probs_per_process.size());
  const int N = probs_per_process[0].cols();
  const int S = probs_per_process[0].rows();
  if (k < 1 || k > N) throw ValidationError("k must be in [1, N]");
  if (policy.mode == CapacityMode::local_proportional && c_hat == nullptr)
    throw ValidationError("local_proportional capacity requires a target pattern");

  std::vector<RoutingResult> results(static_cast<size_t>(P));
  std::vector<int> order(static_cast<size_t>(N));

  for (int i = 0; i < P; ++i) {
    const Matrix& probs = probs_per_process[static_cast<size_t>(i)];
    if (probs.cols() != N || probs.rows() != S)
      throw ValidationError("per-process probability shapes differ");
    auto& res = results[static_cast<size_t>(i)];
    res.assignments.assign(static_cast<size_t>(S), {});
    res.counts.assign(static_cast<size_t>(N), 0);
    res.dropped.assign(static_cast<size_t>(N), 0);
    res.mean_probs.assign(static_cast<size_t>(N), 0.0);

    for (int s = 0; s < S; ++s) {
      for (int e = 0; e < N; ++e) res.mean_probs[static_cast<size_t>(e)] += probs.at(s, e) / S;

      std::iota(order.begin(), order.end(), 0);
      // Higher prob first; ties pick the lower expert index.
      std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
        if (probs.at(s, a) != probs.at(s, b)) return probs.at(s, a) > probs.at(s, b);
        return a < b;
      });

      double selected_mass = 0.0;
      for (int slot = 0; slot < k; ++slot) selected_mass += probs.at(s, order[static_cast<size_t>(slot)]);
      auto& assigns = res.assignments[static_cast<size_t>(s)];
      assigns.resize(static_cast<size_t>(k));
      for (int slot = 0; slot < k; ++slot) {
        const int e = order[static_cast<size_t>(slot)];
        assigns[static_cast<size_t>(slot)].expert = e;
        assigns[static_cast<size_t>(slot)].score = probs.at(s, e);
        assigns[static_cast<size_t>(slot)].gate_value =
            k == 1 ? probs.at(s, e) : probs.at(s, e) / selected_mass;
      }
    }
  }

  // Capacity enforcement. Keeps the highest scores; ties broken by process,
  // then token index, so results do not depend on sort internals.
  const auto keep_top = [](std::vector<Pick>& picks, long long cap) {
    std::sort(picks.begin(), picks.end(), [](const Pick& a, const Pick& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.process != b.process) return a.process < b.process;
      return a.token < b.token;
    });
    return picks.size() > static_cast<size_t>(std::max<long long>(cap, 0))
               ? std::vector<Pick>(picks.begin() + static_cast<long>(cap), picks.end())
               : std::vector<Pick>{};
  };

  if (policy.mode != CapacityMode::none) {
    const double cap_real = policy.expert_capacity(k, S, N, P);
    for (int e = 0; e < N; ++e) {
      std::vector<std::vector<Pick>> buckets;  // one bucket per capacity domain
      std::vector<long long> caps;

      if (policy.mode == CapacityMode::global) {
        buckets.resize(1);
        caps.assign(1, static_cast<long long>(std::floor(cap_real + 1e-9)));
        for (int i = 0; i < P; ++i)
          for (int s = 0; s < S; ++s)
            for (int slot = 0; slot < k; ++slot)
              if (results[static_cast<size_t>(i)].assignments[static_cast<size_t>(s)][static_cast<size_t>(slot)].expert == e)
                buckets[0].push_back({i, s, slot, results[static_cast<size_t>(i)].assignments[static_cast<size_t>(s)][static_cast<size_t>(slot)].score});
      } else {
        buckets.resize(static_cast<size_t>(P));
        if (policy.mode == CapacityMode::local) {
          caps.assign(static_cast<size_t>(P), static_cast<long long>(std::floor(cap_real / P + 1e-9)));
        } else {
          // Capacity split proportional to the target pattern column.
          std::vector<double> weights(static_cast<size_t>(P), 0.0);
          double col_sum = 0.0;
          for (int i = 0; i < P; ++i) {
            weights[static_cast<size_t>(i)] = c_hat->at(i, e);
            col_sum += c_hat->at(i, e);
          }
          if (!(col_sum > 0.0)) throw ValidationError("target pattern column sums to zero");
          for (double& w : weights) w *= cap_real / col_sum;
          caps = largest_remainder_round(weights, static_cast<long long>(std::floor(cap_real + 1e-9)));
        }
        for (int i = 0; i < P; ++i)
          for (int s = 0; s < S; ++s)
            for (int slot = 0; slot < k; ++slot)
              if (results[static_cast<size_t>(i)].assignments[static_cast<size_t>(s)][static_cast<size_t>(slot)].expert == e)
                buckets[static_cast<size_t>(i)].push_back({i, s, slot, results[static_cast<size_t>(i)].assignments[static_cast<size_t>(s)][static_cast<size_t>(slot)].score});
      }

      for (size_t bk = 0; bk < buckets.size(); ++bk)
        for (const Pick& drop : keep_top(buckets[bk], caps[bk]))
          results[static_cast<size_t>(drop.process)]
              .assignments[static_cast<size_t>(drop.token)][static_cast<size_t>(drop.slot)]
              .kept = false;
    }
  }

  for (auto& res : results)
    for (const auto& token_assigns : res.assignments)
      for (const auto& a : token_assigns)
        (a.kept ? res.counts : res.dropped)[static_cast<size_t>(a.expert)] += 1;

  return results;
}

RoutingResult topk_route(const Matrix& probs, int k, const CapacityPolicy& policy,
                         const Matrix* c_hat) {
  return topk_route(std::vector<Matrix>{probs}, k, policy, c_hat)[0];
}

double loss_balance(const RoutingResult& result, int S) {
  double loss = 0.0;
  for (size_t e = 0; e < result.counts.size(); ++e)
    loss += result.mean_probs[e] * (static_cast<double>(result.counts[e]) / S);
  return loss;
}

PenaltyNorm penalty_norm_from_string(const std::string& s) {
  if (s == "sum" || s == "sum_norm") return PenaltyNorm::sum_norm;
  if (s == "softmax") return PenaltyNorm::softmax;
  throw ValidationError("unknown penalty normalization: " + s);
}

std::vector<double> penalty_weights(std::span<const double> c_hat_row, PenaltyNorm norm,
                                    double temperature) {
  std::vector<double> inv(c_hat_row.size());
  for (size_t e = 0; e < c_hat_row.size(); ++e) {
    if (!(c_hat_row[e] > 0.0)) throw ValidationError("penalty weights need strictly positive targets");
    inv[e] = 1.0 / c_hat_row[e];
  }
  std::vector<double> p(inv.size());
  if (norm == PenaltyNorm::sum_norm) {
    const double total = std::accumulate(inv.begin(), inv.end(), 0.0);
    for (size_t e = 0; e < inv.size(); ++e) p[e] = inv[e] / total;
  } else {
    double t = temperature;
    if (!(t > 0.0)) t = std::accumulate(inv.begin(), inv.end(), 0.0) / static_cast<double>(inv.size());
    double max_z = -std::numeric_limits<double>::infinity();
    for (double v : inv) max_z = std::max(max_z, v / t);
    double denom = 0.0;
    for (size_t e = 0; e < inv.size(); ++e) {
      p[e] = std::exp(inv[e] / t - max_z);
      denom += p[e];
    }
    for (double& v : p) v /= denom;
  }
  return p;
}

double loss_topo(const RoutingResult& result, std::span<const double> penalty, int N, int P, int S) {
  if (penalty.size() != result.counts.size())
    throw ValidationError("penalty row size does not match expert count");
  double loss = 0.0;
  for (size_t e = 0; e < result.counts.size(); ++e)
    loss += penalty[e] * result.mean_probs[e] * (static_cast<double>(result.counts[e]) / S);
  return static_cast<double>(N) * P * loss;
}

Matrix grad_aux_loss(const Matrix& x, const Matrix& probs, std::span<const double> coeff) {
  const int S = probs.rows();
  const int N = probs.cols();
  // d loss / d logits, then chain through z = x * W.
  Matrix dz(S, N);
  for (int s = 0; s < S; ++s) {
    double dot = 0.0;
    for (int e = 0; e < N; ++e) dot += coeff[static_cast<size_t>(e)] * probs.at(s, e);
    for (int e = 0; e < N; ++e)
      dz.at(s, e) = probs.at(s, e) * (coeff[static_cast<size_t>(e)] - dot);
  }
  Matrix grad(x.cols(), N);
  add_atb(grad, x, dz);
  return grad;
}

std::vector<double> balance_coefficients(const RoutingResult& result, int S) {
  std::vector<double> coeff(result.counts.size());
  const double s2 = static_cast<double>(S) * S;
  for (size_t e = 0; e < coeff.size(); ++e) coeff[e] = static_cast<double>(result.counts[e]) / s2;
  return coeff;
}

std::vector<double> topo_coefficients(const RoutingResult& result, std::span<const double> penalty,
                                      int N, int P, int S) {
  std::vector<double> coeff(result.counts.size());
  const double scale = static_cast<double>(N) * P / (static_cast<double>(S) * S);
  for (size_t e = 0; e < coeff.size(); ++e)
    coeff[e] = scale * penalty[e] * static_cast<double>(result.counts[e]);
  return coeff;
}

Matrix grad_loss_balance(const Matrix& x, const Matrix& probs, const RoutingResult& result, int S) {
  return grad_aux_loss(x, probs, balance_coefficients(result, S));
}

Matrix grad_loss_topo(const Matrix& x, const Matrix& probs, const RoutingResult& result,
                      std::span<const double> penalty, int N, int P, int S) {
  return grad_aux_loss(x, probs, topo_coefficients(result, penalty, N, P, S));
}

}  // namespace tad
