#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tadispatch/gate.hpp"
#include "tadispatch/matrix.hpp"

namespace tad {

// Model and exchange dimensions of one experiment.
struct ModelDims {
  int d = 8;      // token feature size
  int d_out = 4;  // target size
  int N = 4;
  int P = 4;
  int k = 1;
  int S = 120;
  double bytes_per_element = 4.0;
};

// Synthetic mixture-regression task: tokens are drawn around well separated
// cluster centers and each cluster has its own ground-truth linear map.
struct TaskConfig {
  int cluster_count = 4;
  double separation = 3.0;   // distance scale between cluster centers
  double within_std = 1.0;   // token spread around its center
  double noise_std = 0.05;   // observation noise on targets
  double map_spread = 1.0;   // how distinct the per-cluster maps are
};

struct SyntheticTask {
  Matrix cluster_means;            // cluster_count x d
  std::vector<Matrix> true_maps;   // cluster_count, each d x d_out
  std::vector<Matrix> batch_x;     // per process, S x d
  std::vector<Matrix> batch_y;     // per process, S x d_out
  std::vector<std::vector<int>> token_cluster;
  TaskConfig config;
};

// Deterministic task generation; every process draws i.i.d. from the same
// mixture.
SyntheticTask gen_synthetic(uint64_t seed, const ModelDims& dims, const TaskConfig& task);

enum class LossKind { balance, topo, compulsory };

LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind kind);

struct TrainConfig {
  ModelDims dims;
  TaskConfig task;
  double lr = 0.05;
  int steps = 2000;
  double aux_weight = 1.0;
  PenaltyNorm norm = PenaltyNorm::sum_norm;
  double temperature = 0.0;  // <= 0: default
  CapacityPolicy capacity;
  std::optional<int> switch_step;  // topo loss until this step, then balance
  uint64_t seed = 1;
  int report_window = 100;

  // Optional explicit starts; empty vectors select the seeded init.
  std::vector<Matrix> init_gates;    // P matrices, d x N
  std::vector<Matrix> init_experts;  // N matrices, d x d_out

  // Profile for per-step communication estimates (P x P). Empty matrices
  // disable the estimate.
  Matrix alpha_hat;
  Matrix beta_hat;
  // Devices within each device's innermost group, for dispatch-shape
  // reporting. Empty: each device counts only itself.
  std::vector<std::vector<int>> intra_groups;
};

struct TrainReport {
  LossKind loss = LossKind::balance;
  uint64_t seed = 0;
  std::vector<double> task_loss;     // per step
  std::vector<double> aux_loss;      // per step, unweighted
  std::vector<double> comm_us;       // per step bottleneck + size exchange
  std::vector<double> dropped_rate;  // per step, dropped / (k*S*P)

  Matrix initial_dispatch;  // realized counts at step 0
  Matrix final_dispatch;    // counts averaged over the report window

  std::vector<double> tv_rows;       // TV(final row, normalized target row)
  double tv_initial_mean = 0.0;
  double tv_final_mean = 0.0;
  double col_balance_max_dev = 0.0;  // on the window-averaged dispatch
  double min_expert_load = 0.0;      // smallest window-averaged column sum
  double intra_share = 0.0;          // window share sent to intra-group experts
  double final_task_loss = 0.0;      // window mean
  double final_aux_loss = 0.0;
  double final_comm_us = 0.0;
  double dropped_total_rate = 0.0;
};

// Full-batch gradient descent on task MSE + aux_weight * auxiliary loss.
// Gate replicas are per process; experts are shared and trained jointly
// with deterministic reduction order. c_hat is required for the topo and
// compulsory kinds. Throws on divergence.
TrainReport train(const TrainConfig& config, const SyntheticTask& task, LossKind kind,
                  const Matrix* c_hat);

// Total variation distance between two rows after normalization.
double tv_distance(std::span<const double> a, std::span<const double> b);

struct ComparisonSummary {
  double final_task_ratio = 0.0;   // a / b
  double final_comm_ratio = 0.0;   // a / b
  double dispatch_tv_mean = 0.0;   // between final dispatch matrices
  std::vector<double> dispatch_tv_rows;
  double col_dev_a = 0.0;
  double col_dev_b = 0.0;
  double intra_share_a = 0.0;
  double intra_share_b = 0.0;
};

ComparisonSummary compare_runs(const TrainReport& a, const TrainReport& b);

}  // namespace tad
