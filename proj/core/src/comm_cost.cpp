#include "tadispatch/comm_cost.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>

#include "tadispatch/errors.hpp"

namespace tad {

double pair_cost(const Matrix& alpha, const Matrix& beta, const DispatchMatrix& dm, int i, int j) {
  if (i < 0 || i >= dm.config.P || j < 0 || j >= dm.config.P)
    throw ValidationError("pair_cost device index out of range");
  const double mb = dm.device_payload_tokens(i, j) * dm.config.mb_per_token();
  const double cost = alpha.at(i, j) + beta.at(i, j) * mb;
  if (!std::isfinite(cost)) throw ValidationError("pair cost overflows the representable range");
  return cost;
}

CostReport exchange_cost(const Matrix& alpha, const Matrix& beta, const DispatchMatrix& dm,
                         int extra_alpha_rounds) {
  dm.validate();
  const int p = dm.config.P;
  if (alpha.rows() != p || beta.rows() != p)
    throw ValidationError("profile side does not match dispatch matrix");

  CostReport r;
  r.pair_cost_us = Matrix(p, p);
  r.per_device_send_us.assign(static_cast<size_t>(p), 0.0);
  r.per_device_recv_us.assign(static_cast<size_t>(p), 0.0);

  double max_alpha = 0.0;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      const double cost = pair_cost(alpha, beta, dm, i, j);
      r.pair_cost_us.at(i, j) = cost;
      r.bottleneck_us = std::max(r.bottleneck_us, cost);
      r.per_device_send_us[static_cast<size_t>(i)] =
          std::max(r.per_device_send_us[static_cast<size_t>(i)], cost);
      r.per_device_recv_us[static_cast<size_t>(j)] =
          std::max(r.per_device_recv_us[static_cast<size_t>(j)], cost);
      max_alpha = std::max(max_alpha, alpha.at(i, j));
    }

  double total_tokens = 0.0;
  for (double v : dm.c.data()) total_tokens += v;
  r.total_bytes = total_tokens * dm.config.d * dm.config.b;
  r.size_exchange_us = extra_alpha_rounds * max_alpha;
  r.total_estimate_us = r.bottleneck_us + r.size_exchange_us;
  return r;
}

FittedProfile fit_profile(const std::vector<TransferSample>& samples, int device_count) {
  if (samples.empty()) throw ValidationError("fit_profile needs at least one sample");
  int p = device_count;
  for (const auto& s : samples) {
    if (s.src < 0 || s.dst < 0) throw ValidationError("negative device index in samples");
    if (!(s.message_mb > 0.0)) throw ValidationError("message sizes must be positive");
    p = std::max(p, std::max(s.src, s.dst) + 1);
  }

  std::map<std::pair<int, int>, std::vector<const TransferSample*>> by_pair;
  for (const auto& s : samples) by_pair[{s.src, s.dst}].push_back(&s);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  FittedProfile out{Matrix(p, p, nan), Matrix(p, p, nan)};

  for (const auto& [pair, group] : by_pair) {
    const auto [src, dst] = pair;
    double min_size = group[0]->message_mb, max_size = group[0]->message_mb;
    for (const auto* s : group) {
      min_size = std::min(min_size, s->message_mb);
      max_size = std::max(max_size, s->message_mb);
    }

    double a = 0.0, b = 0.0;
    if (max_size - min_size < 1e-12 * max_size) {
      // Single message size: alpha is not identifiable, fix it to zero.
      for (const auto* s : group) b += s->time_us / s->message_mb;
      b /= static_cast<double>(group.size());
    } else {
      double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
      const double n = static_cast<double>(group.size());
      for (const auto* s : group) {
        sx += s->message_mb;
        sy += s->time_us;
        sxx += s->message_mb * s->message_mb;
        sxy += s->message_mb * s->time_us;
      }
      b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
      a = (sy - b * sx) / n;
      if (a < 0.0) {  // refit through the origin
        a = 0.0;
        b = sxy / sxx;
      }
    }
    if (!(b > 0.0))
      throw ValidationError("fitted beta is not positive for pair " + std::to_string(src) + "->" +
                            std::to_string(dst));
    out.alpha.at(src, dst) = a;
    out.beta.at(src, dst) = b;
  }
  return out;
}

void save_cost_report_json(const std::string& path, const CostReport& report) {
  nlohmann::json j;
  const int p = report.pair_cost_us.rows();
  j["P"] = p;
  j["pair_cost_us"] = report.pair_cost_us.data();  // row-major
  j["bottleneck_us"] = report.bottleneck_us;
  j["per_device_send_us"] = report.per_device_send_us;
  j["per_device_recv_us"] = report.per_device_recv_us;
  j["total_bytes"] = report.total_bytes;
  j["size_exchange_us"] = report.size_exchange_us;
  j["total_estimate_us"] = report.total_estimate_us;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write cost report: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace tad
