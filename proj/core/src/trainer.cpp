#include "tadispatch/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tadispatch/comm_cost.hpp"
#include "tadispatch/errors.hpp"
#include "tadispatch/rng.hpp"

namespace tad {

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "balance") return LossKind::balance;
  if (s == "topo") return LossKind::topo;
  if (s == "compulsory") return LossKind::compulsory;
  throw ValidationError("unknown loss kind: " + s);
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::balance: return "balance";
    case LossKind::topo: return "topo";
    case LossKind::compulsory: return "compulsory";
  }
  return "unknown";
}

namespace {

// Orthonormal-ish cluster directions: Gram-Schmidt over seeded gaussian
// draws, falling back to plain normalization when clusters outnumber
// dimensions.
Matrix make_cluster_means(Rng& rng, int cluster_count, int d, double separation) {
  Matrix means(cluster_count, d);
  for (int c = 0; c < cluster_count; ++c) {
    std::vector<double> v(static_cast<size_t>(d));
    for (double& x : v) x = rng.normal();
    if (cluster_count <= d) {
      for (int prev = 0; prev < c; ++prev) {
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += v[static_cast<size_t>(j)] * means.at(prev, j);
        for (int j = 0; j < d; ++j) v[static_cast<size_t>(j)] -= dot * means.at(prev, j) / (separation * separation);
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;
    for (int j = 0; j < d; ++j) means.at(c, j) = separation * v[static_cast<size_t>(j)] / norm;
  }
  return means;
}

}  // namespace

SyntheticTask gen_synthetic(uint64_t seed, const ModelDims& dims, const TaskConfig& task) {
  if (task.cluster_count < 1) throw ValidationError("cluster_count must be positive");
  if (dims.P < 1 || dims.S < 1 || dims.d < 1 || dims.d_out < 1)
    throw ValidationError("model dimensions must be positive");

  SyntheticTask out;
  out.config = task;

  Rng task_rng(derive_seed(seed, 0));
  out.cluster_means = make_cluster_means(task_rng, task.cluster_count, dims.d, task.separation);

  // True maps share a base component; map_spread controls how far apart the
  // per-cluster parts sit.
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.d));
  Matrix base(dims.d, dims.d_out);
  for (double& v : base.data()) v = scale * task_rng.normal();
  out.true_maps.reserve(static_cast<size_t>(task.cluster_count));
  for (int c = 0; c < task.cluster_count; ++c) {
    Matrix m = base;
    for (double& v : m.data()) v += task.map_spread * scale * task_rng.normal();
    out.true_maps.push_back(std::move(m));
  }

  out.batch_x.reserve(static_cast<size_t>(dims.P));
  out.batch_y.reserve(static_cast<size_t>(dims.P));
  out.token_cluster.resize(static_cast<size_t>(dims.P));
  for (int i = 0; i < dims.P; ++i) {
    Rng rng(derive_seed(seed, 1000 + static_cast<uint64_t>(i)));
    Matrix x(dims.S, dims.d);
    Matrix y(dims.S, dims.d_out);
    auto& clusters = out.token_cluster[static_cast<size_t>(i)];
    clusters.resize(static_cast<size_t>(dims.S));
    for (int s = 0; s < dims.S; ++s) {
      const int c = rng.uniform_int(0, task.cluster_count - 1);
      clusters[static_cast<size_t>(s)] = c;
      for (int j = 0; j < dims.d; ++j)
        x.at(s, j) = out.cluster_means.at(c, j) + task.within_std * rng.normal();
      for (int j = 0; j < dims.d_out; ++j) {
        double v = 0.0;
        for (int r = 0; r < dims.d; ++r) v += x.at(s, r) * out.true_maps[static_cast<size_t>(c)].at(r, j);
        y.at(s, j) = v + task.noise_std * rng.normal();
      }
    }
    out.batch_x.push_back(std::move(x));
    out.batch_y.push_back(std::move(y));
  }
  return out;
}

double tv_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("tv_distance got rows of different sizes");
  const double sa = std::accumulate(a.begin(), a.end(), 0.0);
  const double sb = std::accumulate(b.begin(), b.end(), 0.0);
  if (!(sa > 0.0) || !(sb > 0.0)) return 0.0;
  double tv = 0.0;
  for (size_t e = 0; e < a.size(); ++e) tv += std::abs(a[e] / sa - b[e] / sb);
  return 0.5 * tv;
}

namespace {

// Hard re-routing to per-row quotas derived from the target pattern
// (count-clamp ablation). Tokens claim their highest-probability expert
// with remaining quota, strongest scores first. Top-1 only.
void apply_compulsory_quota(std::vector<RoutingResult>& routing,
                            const std::vector<Matrix>& probs, const Matrix& c_hat, int k_sel) {
  if (k_sel != 1) throw ValidationError("compulsory routing supports top-1 only");
  const int P = static_cast<int>(routing.size());
  const int N = c_hat.cols();
  for (int i = 0; i < P; ++i) {
    auto& res = routing[static_cast<size_t>(i)];
    const int S = static_cast<int>(res.assignments.size());
    std::vector<double> share(static_cast<size_t>(N));
    double row_sum = 0.0;
    for (int e = 0; e < N; ++e) row_sum += c_hat.at(i, e);
    for (int e = 0; e < N; ++e)
      share[static_cast<size_t>(e)] = c_hat.at(i, e) / row_sum * static_cast<double>(S);
    std::vector<long long> quota = largest_remainder_round(share, S);

    std::vector<int> order(static_cast<size_t>(S));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double sa = res.assignments[static_cast<size_t>(a)][0].score;
      const double sb = res.assignments[static_cast<size_t>(b)][0].score;
      if (sa != sb) return sa > sb;
      return a < b;
    });

    const Matrix& p = probs[static_cast<size_t>(i)];
    std::vector<int> expert_rank(static_cast<size_t>(N));
    for (int s : order) {
      std::iota(expert_rank.begin(), expert_rank.end(), 0);
      std::sort(expert_rank.begin(), expert_rank.end(), [&](int a, int b) {
        if (p.at(s, a) != p.at(s, b)) return p.at(s, a) > p.at(s, b);
        return a < b;
      });
      for (int e : expert_rank) {
        if (quota[static_cast<size_t>(e)] > 0) {
          quota[static_cast<size_t>(e)] -= 1;
          auto& a = res.assignments[static_cast<size_t>(s)][0];
          a.expert = e;
          a.score = p.at(s, e);
          a.gate_value = p.at(s, e);
          a.kept = true;
          break;
        }
      }
    }
    std::fill(res.counts.begin(), res.counts.end(), 0);
    std::fill(res.dropped.begin(), res.dropped.end(), 0);
    for (const auto& token : res.assignments) res.counts[static_cast<size_t>(token[0].expert)] += 1;
  }
}

struct WindowStats {
  Matrix dispatch_sum;
  long long steps = 0;
  double task_loss = 0.0;
  double aux_loss = 0.0;
  double comm_us = 0.0;
  double intra_num = 0.0;
  double intra_den = 0.0;
};

}  // namespace

TrainReport train(const TrainConfig& config, const SyntheticTask& task, LossKind kind,
                  const Matrix* c_hat) {
  const ModelDims& dims = config.dims;
  if (dims.N % dims.P != 0) throw ValidationError("N must be divisible by P");
  if (static_cast<int>(task.batch_x.size()) != dims.P)
    throw ValidationError("task was generated for a different process count");
  if ((kind == LossKind::topo || kind == LossKind::compulsory) && c_hat == nullptr)
    throw ValidationError("topo and compulsory losses require a target pattern");
  if (c_hat && (c_hat->rows() != dims.P || c_hat->cols() != dims.N))
    throw ValidationError("target pattern must be P x N");

  const int P = dims.P, N = dims.N, S = dims.S, k_sel = dims.k;
  const double w = config.aux_weight;
  const bool has_profile = config.alpha_hat.rows() == P && config.beta_hat.rows() == P;
  const int exchange_rounds = (config.capacity.mode == CapacityMode::global ||
                               config.capacity.mode == CapacityMode::local_proportional)
                                  ? 1
                                  : 0;

  std::vector<std::vector<double>> penalties;
  if (c_hat)
    for (int i = 0; i < P; ++i)
      penalties.push_back(penalty_weights(c_hat->row(i), config.norm, config.temperature));

  // Per-process gate replicas; experts are shared.
  std::vector<Matrix> gates = config.init_gates;
  if (gates.empty()) {
    for (int i = 0; i < P; ++i) {
      Rng rng(derive_seed(config.seed, 2000 + static_cast<uint64_t>(i)));
      Matrix wi(dims.d, N);
      for (double& v : wi.data()) v = 0.01 * rng.normal();
      gates.push_back(std::move(wi));
    }
  }
  std::vector<Matrix> experts = config.init_experts;
  if (experts.empty()) {
    const double expert_scale = 1.0 / std::sqrt(static_cast<double>(dims.d));
    for (int e = 0; e < N; ++e) {
      Rng rng(derive_seed(config.seed, 3000 + static_cast<uint64_t>(e)));
      Matrix u(dims.d, dims.d_out);
      for (double& v : u.data()) v = expert_scale * rng.normal();
      experts.push_back(std::move(u));
    }
  }
  if (static_cast<int>(gates.size()) != P || static_cast<int>(experts.size()) != N)
    throw ValidationError("initial weights have the wrong process or expert count");

  TrainReport report;
  report.loss = kind;
  report.seed = config.seed;
  report.task_loss.reserve(static_cast<size_t>(config.steps));

  const int window = std::max(1, std::min(config.report_window, std::max(config.steps, 1)));
  const int window_start = std::max(0, config.steps - window);
  WindowStats win;
  win.dispatch_sum = Matrix(P, N);
  long long dropped_total = 0;

  DispatchConfig comm_cfg{k_sel, S, N, P, static_cast<double>(dims.d), dims.bytes_per_element};

  const double mse_scale = 2.0 / (static_cast<double>(P) * S * dims.d_out);
  std::vector<Matrix> probs(static_cast<size_t>(P));

  for (int step = 0; step < config.steps; ++step) {
    for (int i = 0; i < P; ++i) probs[static_cast<size_t>(i)] = gate_forward(task.batch_x[static_cast<size_t>(i)], gates[static_cast<size_t>(i)]);

    std::vector<RoutingResult> routing =
        topk_route(probs, k_sel, config.capacity, kind == LossKind::balance ? nullptr : c_hat);
    if (kind == LossKind::compulsory) apply_compulsory_quota(routing, probs, *c_hat, k_sel);

    // Topo switches back to the plain balance loss after switch_step.
    LossKind aux_kind = kind == LossKind::compulsory ? LossKind::balance : kind;
    if (aux_kind == LossKind::topo && config.switch_step && step > *config.switch_step)
      aux_kind = LossKind::balance;

    std::vector<Matrix> expert_grads(static_cast<size_t>(N), Matrix(dims.d, dims.d_out));
    double step_task = 0.0;
    double step_aux = 0.0;
    Matrix counts(P, N);

    std::vector<Matrix> gate_grads(static_cast<size_t>(P));
    for (int i = 0; i < P; ++i) {
      const Matrix& x = task.batch_x[static_cast<size_t>(i)];
      const Matrix& y = task.batch_y[static_cast<size_t>(i)];
      const Matrix& pi = probs[static_cast<size_t>(i)];
      const RoutingResult& route = routing[static_cast<size_t>(i)];

      Matrix dpi(S, N);
      std::vector<double> xu(static_cast<size_t>(dims.d_out));
      std::vector<double> residual(static_cast<size_t>(dims.d_out));

      for (int s = 0; s < S; ++s) {
        const auto& assigns = route.assignments[static_cast<size_t>(s)];
        std::fill(residual.begin(), residual.end(), 0.0);
        // y_hat = sum of kept gate_value * (x_s U_e); residual starts as y_hat - y
        std::vector<std::vector<double>> slot_outputs(assigns.size());
        for (size_t slot = 0; slot < assigns.size(); ++slot) {
          const auto& a = assigns[slot];
          if (!a.kept) continue;
          auto& out_vec = slot_outputs[slot];
          out_vec.assign(static_cast<size_t>(dims.d_out), 0.0);
          const Matrix& u = experts[static_cast<size_t>(a.expert)];
          for (int r = 0; r < dims.d; ++r) {
            const double xr = x.at(s, r);
            if (xr == 0.0) continue;
            for (int j = 0; j < dims.d_out; ++j) out_vec[static_cast<size_t>(j)] += xr * u.at(r, j);
          }
          for (int j = 0; j < dims.d_out; ++j)
            residual[static_cast<size_t>(j)] += a.gate_value * out_vec[static_cast<size_t>(j)];
        }
        for (int j = 0; j < dims.d_out; ++j) {
          residual[static_cast<size_t>(j)] -= y.at(s, j);
          step_task += residual[static_cast<size_t>(j)] * residual[static_cast<size_t>(j)];
        }

        // dL/d gate_value per kept slot, then through the combine weights.
        double selected_mass = 0.0;
        for (const auto& a : assigns) selected_mass += a.score;
        std::vector<double> dldg(assigns.size(), 0.0);
        for (size_t slot = 0; slot < assigns.size(); ++slot) {
          const auto& a = assigns[slot];
          if (!a.kept) continue;
          double dot = 0.0;
          for (int j = 0; j < dims.d_out; ++j)
            dot += residual[static_cast<size_t>(j)] * slot_outputs[slot][static_cast<size_t>(j)];
          dldg[slot] = mse_scale * dot;

          // expert gradient: g * x^T residual
          Matrix& ug = expert_grads[static_cast<size_t>(a.expert)];
          for (int r = 0; r < dims.d; ++r) {
            const double xr = mse_scale * a.gate_value * x.at(s, r);
            if (xr == 0.0) continue;
            for (int j = 0; j < dims.d_out; ++j) ug.at(r, j) += xr * residual[static_cast<size_t>(j)];
          }
        }
        if (k_sel == 1) {
          if (assigns[0].kept) dpi.at(s, assigns[0].expert) += dldg[0];
        } else {
          // g_j = pi_j / sum(pi_selected)
          for (size_t l = 0; l < assigns.size(); ++l) {
            double acc = 0.0;
            for (size_t j = 0; j < assigns.size(); ++j) {
              if (dldg[j] == 0.0) continue;
              const double del = j == l ? selected_mass : 0.0;
              acc += dldg[j] * (del - assigns[j].score) / (selected_mass * selected_mass);
            }
            dpi.at(s, assigns[l].expert) += acc;
          }
        }
      }

      // auxiliary loss value and gradient through the mean probabilities
      std::vector<double> coeff;
      if (aux_kind == LossKind::topo) {
        step_aux += loss_topo(route, penalties[static_cast<size_t>(i)], N, P, S);
        coeff = topo_coefficients(route, penalties[static_cast<size_t>(i)], N, P, S);
      } else {
        step_aux += loss_balance(route, S);
        coeff = balance_coefficients(route, S);
      }
      const double aux_scale = w / static_cast<double>(P);
      for (int s = 0; s < S; ++s)
        for (int e = 0; e < N; ++e) dpi.at(s, e) += aux_scale * coeff[static_cast<size_t>(e)];

      // softmax backward, then dW = x^T dZ
      Matrix dz(S, N);
      for (int s = 0; s < S; ++s) {
        double dot = 0.0;
        for (int e = 0; e < N; ++e) dot += dpi.at(s, e) * pi.at(s, e);
        for (int e = 0; e < N; ++e) dz.at(s, e) = pi.at(s, e) * (dpi.at(s, e) - dot);
      }
      gate_grads[static_cast<size_t>(i)] = Matrix(dims.d, N);
      add_atb(gate_grads[static_cast<size_t>(i)], x, dz);

      for (int e = 0; e < N; ++e) counts.at(i, e) = static_cast<double>(route.counts[static_cast<size_t>(e)]);
    }

    const double task_loss_value = step_task / (static_cast<double>(P) * S * dims.d_out);
    const double aux_loss_value = step_aux / static_cast<double>(P);
    const double total = task_loss_value + w * aux_loss_value;
    if (!std::isfinite(total))
      throw std::runtime_error("training diverged at step " + std::to_string(step) +
                               " (task=" + std::to_string(task_loss_value) +
                               ", aux=" + std::to_string(aux_loss_value) + "); lower the learning rate");

    long long dropped_step = 0;
    for (const auto& route : routing)
      for (long long d : route.dropped) dropped_step += d;
    dropped_total += dropped_step;

    double comm = 0.0;
    if (has_profile) {
      DispatchMatrix dm{counts, comm_cfg};
      comm = exchange_cost(config.alpha_hat, config.beta_hat, dm, exchange_rounds).total_estimate_us;
    }

    report.task_loss.push_back(task_loss_value);
    report.aux_loss.push_back(aux_loss_value);
    report.comm_us.push_back(comm);
    report.dropped_rate.push_back(static_cast<double>(dropped_step) /
                                  (static_cast<double>(k_sel) * S * P));
    if (step == 0) report.initial_dispatch = counts;

    if (step >= window_start) {
      win.steps += 1;
      win.task_loss += task_loss_value;
      win.aux_loss += aux_loss_value;
      win.comm_us += comm;
      for (int i = 0; i < P; ++i)
        for (int e = 0; e < N; ++e) win.dispatch_sum.at(i, e) += counts.at(i, e);
      for (int i = 0; i < P; ++i) {
        double row_total = 0.0, intra = 0.0;
        for (int e = 0; e < N; ++e) row_total += counts.at(i, e);
        const int experts_per_device = N / P;
        if (!config.intra_groups.empty()) {
          for (int dev : config.intra_groups[static_cast<size_t>(i)])
            for (int e = dev * experts_per_device; e < (dev + 1) * experts_per_device; ++e)
              intra += counts.at(i, e);
        } else {
          for (int e = i * experts_per_device; e < (i + 1) * experts_per_device; ++e)
            intra += counts.at(i, e);
        }
        win.intra_num += intra;
        win.intra_den += row_total;
      }
    }

    // synchronized update, fixed order
    for (int i = 0; i < P; ++i)
      for (size_t idx = 0; idx < gates[static_cast<size_t>(i)].data().size(); ++idx)
        gates[static_cast<size_t>(i)].data()[idx] -= config.lr * gate_grads[static_cast<size_t>(i)].data()[idx];
    for (int e = 0; e < N; ++e)
      for (size_t idx = 0; idx < experts[static_cast<size_t>(e)].data().size(); ++idx)
        experts[static_cast<size_t>(e)].data()[idx] -= config.lr * expert_grads[static_cast<size_t>(e)].data()[idx];
  }

  if (config.steps == 0) {
    report.initial_dispatch = Matrix(P, N);
    report.final_dispatch = Matrix(P, N);
    return report;
  }

  report.final_dispatch = Matrix(P, N);
  for (int i = 0; i < P; ++i)
    for (int e = 0; e < N; ++e)
      report.final_dispatch.at(i, e) = win.dispatch_sum.at(i, e) / static_cast<double>(win.steps);
  report.final_task_loss = win.task_loss / static_cast<double>(win.steps);
  report.final_aux_loss = win.aux_loss / static_cast<double>(win.steps);
  report.final_comm_us = win.comm_us / static_cast<double>(win.steps);
  report.intra_share = win.intra_den > 0.0 ? win.intra_num / win.intra_den : 0.0;
  report.dropped_total_rate = static_cast<double>(dropped_total) /
                              (static_cast<double>(config.steps) * k_sel * S * P);

  const double col_target = static_cast<double>(k_sel) * S * P / N;
  double min_col = std::numeric_limits<double>::infinity();
  for (int e = 0; e < N; ++e) {
    const double col = report.final_dispatch.col_sum(e);
    report.col_balance_max_dev = std::max(report.col_balance_max_dev,
                                          std::abs(col - col_target) / col_target);
    min_col = std::min(min_col, col);
  }
  report.min_expert_load = min_col;

  if (c_hat) {
    double tv0 = 0.0, tv1 = 0.0;
    for (int i = 0; i < P; ++i) {
      report.tv_rows.push_back(tv_distance(report.final_dispatch.row(i), c_hat->row(i)));
      tv0 += tv_distance(report.initial_dispatch.row(i), c_hat->row(i));
      tv1 += report.tv_rows.back();
    }
    report.tv_initial_mean = tv0 / P;
    report.tv_final_mean = tv1 / P;
  }
  return report;
}

ComparisonSummary compare_runs(const TrainReport& a, const TrainReport& b) {
  if (a.task_loss.size() != b.task_loss.size())
    throw ValidationError("compare_runs got reports of different lengths");
  ComparisonSummary cmp;
  cmp.final_task_ratio = b.final_task_loss != 0.0 ? a.final_task_loss / b.final_task_loss : 1.0;
  cmp.final_comm_ratio = b.final_comm_us != 0.0 ? a.final_comm_us / b.final_comm_us : 1.0;
  for (int i = 0; i < a.final_dispatch.rows(); ++i) {
    cmp.dispatch_tv_rows.push_back(tv_distance(a.final_dispatch.row(i), b.final_dispatch.row(i)));
    cmp.dispatch_tv_mean += cmp.dispatch_tv_rows.back();
  }
  if (!cmp.dispatch_tv_rows.empty()) cmp.dispatch_tv_mean /= static_cast<double>(cmp.dispatch_tv_rows.size());
  cmp.col_dev_a = a.col_balance_max_dev;
  cmp.col_dev_b = b.col_balance_max_dev;
  cmp.intra_share_a = a.intra_share;
  cmp.intra_share_b = b.intra_share;
  return cmp;
}

}  // namespace tad
