// Scratch calibration driver (not part of the test suite): runs the RE-1
// experiment across seeds and prints the metrics the acceptance thresholds
// depend on.
#include <cstdio>
#include <cstdlib>

#include "tadispatch/comm_cost.hpp"
#include "tadispatch/solver.hpp"
#include "tadispatch/trainer.hpp"

using namespace tad;

int main(int argc, char** argv) {
  ModelDims dims;
  TaskConfig task;
  TrainConfig cfg;
  cfg.dims = dims;

  task.map_spread = argc > 1 ? std::atof(argv[1]) : 1.0;
  task.noise_std = argc > 2 ? std::atof(argv[2]) : 0.05;
  cfg.steps = argc > 3 ? std::atoi(argv[3]) : 2000;
  cfg.lr = argc > 4 ? std::atof(argv[4]) : 0.05;
  task.separation = argc > 5 ? std::atof(argv[5]) : 3.0;
  cfg.task = task;

  Matrix beta(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) beta.at(i, j) = i == j ? 0.1 : (i / 2 == j / 2 ? 1.0 : 4.0);
  cfg.alpha_hat = Matrix(4, 4, 0.0);
  cfg.beta_hat = beta;
  cfg.intra_groups = {{0, 1}, {0, 1}, {2, 3}, {2, 3}};

  DispatchConfig dc{dims.k, dims.S, dims.N, dims.P, static_cast<double>(dims.d),
                    dims.bytes_per_element};
  const TargetPattern target = target_closed_form(beta, dc);

  const uint64_t seed0 = argc > 6 ? static_cast<uint64_t>(std::atoll(argv[6])) : 1;
  task.cluster_count = argc > 7 ? std::atoi(argv[7]) : 4;
  std::printf("map_spread=%.3g noise=%.3g steps=%d lr=%.3g sep=%.3g\n", task.map_spread,
              task.noise_std, cfg.steps, cfg.lr, task.separation);
  for (uint64_t seed = seed0; seed < seed0 + 5; ++seed) {
    cfg.seed = seed;
    const SyntheticTask data = gen_synthetic(seed, dims, task);
    const TrainReport bal = train(cfg, data, LossKind::balance, &target.dispatch.c);
    const TrainReport topo = train(cfg, data, LossKind::topo, &target.dispatch.c);
    std::printf(
        "seed %llu: mse bal %.5f topo %.5f (ratio %.3f) | comm bal %.4f topo %.4f | intra bal "
        "%.3f topo %.3f | tv0 %.3f tvT %.3f | coldev bal %.3f topo %.3f | minload %.1f %.1f\n",
        (unsigned long long)seed, bal.final_task_loss, topo.final_task_loss,
        topo.final_task_loss / bal.final_task_loss, bal.final_comm_us, topo.final_comm_us,
        bal.intra_share, topo.intra_share, topo.tv_initial_mean, topo.tv_final_mean,
        bal.col_balance_max_dev, topo.col_balance_max_dev, bal.min_expert_load,
        topo.min_expert_load);
  }
  return 0;
}
