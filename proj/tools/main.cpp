// ta-dispatch: topology-aware dispatch patterns for expert-parallel MoE.
// Subcommands: solve, cost, fit, train, compare, report.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tadispatch/comm_cost.hpp"
#include "tadispatch/errors.hpp"
#include "tadispatch/report_io.hpp"
#include "tadispatch/solver.hpp"
#include "tadispatch/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tad;

namespace {

int log_level() {
  const char* v = std::getenv("TA_DISPATCH_LOG");
  return v ? std::atoi(v) : 0;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[ta-dispatch] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "[ta-dispatch:debug] " << msg << "\n";
}

struct ExperimentConfig {
  Topology topology;
  LinkProfile profile;
  ModelDims dims;
  TaskConfig task;
  double lr = 0.05;
  int steps = 2000;
  int report_window = 100;
  std::string loss_kind = "balance";
  std::string normalization = "sum";
  double temperature = 0.0;
  double weight = 1.0;
  std::string capacity = "none";
  double capacity_factor = 1.0;
  std::optional<int> switch_step;
  std::vector<uint64_t> seeds{1};
  std::string out_dir = "out";
};

std::string resolve_path(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path.string() : (base / path).string();
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  const fs::path base = fs::path(path).parent_path();
  try {
    cfg.topology = load_topology_file(resolve_path(base, j.at("topology").get<std::string>()));

    const auto& dims = j.at("dims");
    cfg.dims.d = dims.at("d").get<int>();
    cfg.dims.d_out = dims.value("d_out", 4);
    cfg.dims.N = dims.at("N").get<int>();
    cfg.dims.P = dims.at("P").get<int>();
    cfg.dims.k = dims.value("k", 1);
    cfg.dims.S = dims.at("S").get<int>();
    cfg.dims.bytes_per_element = dims.value("bytes_per_element", 4.0);

    cfg.profile = load_profile_file(resolve_path(base, j.at("profile").get<std::string>()),
                                    cfg.topology.device_count, &cfg.topology);

    if (j.contains("task")) {
      const auto& t = j["task"];
      cfg.task.cluster_count = t.value("cluster_count", cfg.task.cluster_count);
      cfg.task.separation = t.value("separation", cfg.task.separation);
      cfg.task.within_std = t.value("within_std", cfg.task.within_std);
      cfg.task.noise_std = t.value("noise_std", cfg.task.noise_std);
      cfg.task.map_spread = t.value("map_spread", cfg.task.map_spread);
    }
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      cfg.lr = o.value("lr", cfg.lr);
      cfg.steps = o.value("steps", cfg.steps);
      cfg.report_window = o.value("report_window", cfg.report_window);
    }
    if (j.contains("loss")) {
      const auto& l = j["loss"];
      cfg.loss_kind = l.value("kind", cfg.loss_kind);
      cfg.normalization = l.value("normalization", cfg.normalization);
      cfg.temperature = l.value("temperature", cfg.temperature);
      cfg.weight = l.value("weight", cfg.weight);
      cfg.capacity = l.value("capacity", cfg.capacity);
      cfg.capacity_factor = l.value("capacity_factor", cfg.capacity_factor);
      if (l.contains("switch_step") && !l["switch_step"].is_null())
        cfg.switch_step = l["switch_step"].get<int>();
    }
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<uint64_t>>();
    if (j.contains("out")) cfg.out_dir = resolve_path(base, j["out"].get<std::string>());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config JSON: ") + e.what());
  }
  if (cfg.topology.device_count != cfg.dims.P)
    throw ValidationError("config dims.P does not match the topology");
  if (cfg.seeds.empty()) throw ValidationError("config needs at least one seed");
  return cfg;
}

void write_solve_outputs(const std::string& out_dir, const SolveResult& res,
                         const Topology& original) {
  fs::create_directories(out_dir);
  save_dispatch_csv(out_dir + "/pattern.csv", res.pattern.dispatch);
  save_dispatch_json(out_dir + "/pattern.json", res.pattern.dispatch,
                     to_string(res.pattern.source), res.pattern.feasibility);
  json meta;
  meta["kind"] = to_string(original.kind);
  meta["structure"] = original.structure_text();
  meta["merged"] = res.merged;
  if (res.merged) meta["merged_structure"] = res.solve_topology.structure_text();
  meta["source"] = to_string(res.pattern.source);
  meta["feasibility"] = {{"row_residual", res.pattern.feasibility.row_residual},
                         {"col_residual", res.pattern.feasibility.col_residual}};
  if (res.lp_objective_us) meta["lp_objective_us"] = *res.lp_objective_us;
  if (res.closed_form_gap) meta["closed_form_gap"] = *res.closed_form_gap;
  std::ofstream out(out_dir + "/solve_meta.json");
  if (!out) throw ValidationError("cannot write solve metadata");
  out << meta.dump(2) << "\n";
}

// Shared solve routine: returns the target pattern for a topology/profile
// pair at the requested dims.
SolveResult run_solver(const Topology& topo, const LinkProfile& profile,
                       const DispatchConfig& dc, bool exact, bool with_gap) {
  SolveOptions opts;
  opts.use_lp = exact;
  opts.compute_gap = with_gap;
  return solve_target(topo, profile, dc, opts);
}

int cmd_solve(const std::string& topology_path, const std::string& profile_path,
              const std::string& out_dir, bool exact, int k, int S, int N_flag, double hidden,
              double bytes) {
  const Topology topo = load_topology_file(topology_path);
  const int N = N_flag > 0 ? N_flag : topo.device_count;
  const LinkProfile profile = load_profile_file(profile_path, topo.device_count, &topo);
  const DispatchConfig dc{k, S, N, topo.device_count, hidden, bytes};
  log_info("solving " + to_string(topo.kind) + " topology with P=" +
           std::to_string(topo.device_count));
  const SolveResult res = run_solver(topo, profile, dc, exact, /*with_gap=*/exact);
  write_solve_outputs(out_dir, res, topo);
  if (!res.pattern.feasibility.rows_ok(1e-6) || !res.pattern.feasibility.cols_ok(1e-6)) {
    std::cerr << "pattern violates the exchange constraints (row residual "
              << res.pattern.feasibility.row_residual << ", col residual "
              << res.pattern.feasibility.col_residual << ")\n";
    return 2;
  }
  std::cout << "pattern written to " << out_dir << "/pattern.csv\n";
  return 0;
}

int cmd_cost(const std::string& pattern_path, const std::string& profile_path,
             const std::string& topology_path, const std::string& out_dir) {
  const DispatchMatrix dm = load_dispatch_json(pattern_path);
  std::optional<Topology> topo;
  if (!topology_path.empty()) topo = load_topology_file(topology_path);
  const LinkProfile profile =
      load_profile_file(profile_path, dm.config.P, topo ? &*topo : nullptr);
  const CostReport report = exchange_cost(profile, dm);
  fs::create_directories(out_dir);
  save_cost_report_json(out_dir + "/cost.json", report);
  std::cout << "bottleneck_us " << report.bottleneck_us << "\n";
  return 0;
}

int cmd_fit(const std::string& samples_path, const std::string& topology_path,
            const std::string& out_dir, int device_count) {
  const auto samples = load_samples_file(samples_path);
  std::optional<Topology> topo;
  if (!topology_path.empty()) topo = load_topology_file(topology_path);
  const int p = topo ? topo->device_count : device_count;
  const FittedProfile fitted = fit_profile(samples, p);
  const LinkProfile filled = fill_partial_profile(fitted.alpha, fitted.beta,
                                                  topo ? &*topo : nullptr);
  fs::create_directories(out_dir);
  save_profile_file(out_dir + "/profile.csv", filled.alpha, filled.beta);
  std::cout << "profile written to " << out_dir << "/profile.csv\n";
  return 0;
}

struct TrainCli {
  std::string config_path;
  std::vector<std::string> losses;
  std::vector<uint64_t> seeds;
  std::string out_dir;
  std::string norm;
  double temperature = -1.0;
  std::string capacity;
  double capacity_factor = -1.0;
  bool exact = false;
};

int cmd_train(const TrainCli& cli) {
  ExperimentConfig cfg = load_experiment_config(cli.config_path);
  if (!cli.seeds.empty()) cfg.seeds = cli.seeds;
  if (!cli.out_dir.empty()) cfg.out_dir = cli.out_dir;
  if (!cli.norm.empty()) cfg.normalization = cli.norm;
  if (cli.temperature >= 0.0) cfg.temperature = cli.temperature;
  if (!cli.capacity.empty()) cfg.capacity = cli.capacity;
  if (cli.capacity_factor > 0.0) cfg.capacity_factor = cli.capacity_factor;

  std::vector<LossKind> kinds;
  if (cli.losses.empty()) {
    kinds.push_back(loss_kind_from_string(cfg.loss_kind));
  } else {
    for (const auto& name : cli.losses) kinds.push_back(loss_kind_from_string(name));
  }

  const DispatchConfig dc{cfg.dims.k, cfg.dims.S, cfg.dims.N, cfg.dims.P,
                          static_cast<double>(cfg.dims.d), cfg.dims.bytes_per_element};
  const SolveResult solved = run_solver(cfg.topology, cfg.profile, dc, cli.exact, false);
  log_info("target pattern source: " + to_string(solved.pattern.source));

  TrainConfig tc;
  tc.dims = cfg.dims;
  tc.task = cfg.task;
  tc.lr = cfg.lr;
  tc.steps = cfg.steps;
  tc.report_window = cfg.report_window;
  tc.aux_weight = cfg.weight;
  tc.norm = penalty_norm_from_string(cfg.normalization);
  tc.temperature = cfg.temperature;
  tc.capacity.mode = capacity_mode_from_string(cfg.capacity);
  tc.capacity.capacity_factor = cfg.capacity_factor;
  tc.switch_step = cfg.switch_step;
  if (solved.smoothed) {
    tc.alpha_hat = solved.smoothed->alpha_hat;
    tc.beta_hat = solved.smoothed->beta_hat;
    for (int i = 0; i < cfg.dims.P; ++i)
      tc.intra_groups.push_back(solved.smoothed->groups[static_cast<size_t>(i)][0]);
  } else {
    tc.alpha_hat = cfg.profile.alpha;
    tc.beta_hat = cfg.profile.beta;
  }

  fs::create_directories(cfg.out_dir);
  const Matrix& target = solved.pattern.dispatch.c;

  // per kind, per seed
  std::vector<std::vector<TrainReport>> reports(kinds.size());
  for (size_t ki = 0; ki < kinds.size(); ++ki) {
    for (uint64_t seed : cfg.seeds) {
      tc.seed = seed;
      const SyntheticTask data = gen_synthetic(seed, cfg.dims, cfg.task);
      log_debug("training loss=" + to_string(kinds[ki]) + " seed=" + std::to_string(seed));
      TrainReport r = train(tc, data, kinds[ki], &target);
      emit_report(cfg.out_dir,
                  "run_" + to_string(kinds[ki]) + "_seed" + std::to_string(seed), r);
      reports[ki].push_back(std::move(r));
    }
    // aggregate over seeds
    json agg;
    agg["loss"] = to_string(kinds[ki]);
    agg["seeds"] = cfg.seeds;
    double mse = 0, comm = 0, intra = 0, tv0 = 0, tv1 = 0, coldev = 0;
    for (const auto& r : reports[ki]) {
      mse += r.final_task_loss;
      comm += r.final_comm_us;
      intra += r.intra_share;
      tv0 += r.tv_initial_mean;
      tv1 += r.tv_final_mean;
      coldev = std::max(coldev, r.col_balance_max_dev);
    }
    const double n = static_cast<double>(reports[ki].size());
    agg["mean_final_task_loss"] = mse / n;
    agg["mean_final_comm_us"] = comm / n;
    agg["mean_intra_share"] = intra / n;
    agg["mean_tv_initial"] = tv0 / n;
    agg["mean_tv_final"] = tv1 / n;
    agg["max_col_balance_dev"] = coldev;
    std::ofstream out(cfg.out_dir + "/aggregate_" + to_string(kinds[ki]) + ".json");
    out << agg.dump(2) << "\n";
  }

  std::vector<TrainReport> summary_reports;
  for (const auto& run : reports) summary_reports.push_back(run.front());

  std::optional<ComparisonSummary> cmp;
  if (kinds.size() >= 2) {
    json per_seed = json::array();
    for (size_t s = 0; s < cfg.seeds.size(); ++s) {
      const ComparisonSummary c = compare_runs(reports[0][s], reports[1][s]);
      per_seed.push_back({{"seed", cfg.seeds[s]},
                          {"task_ratio", c.final_task_ratio},
                          {"comm_ratio", c.final_comm_ratio},
                          {"intra_share_a", c.intra_share_a},
                          {"intra_share_b", c.intra_share_b}});
      if (s == 0) cmp = c;
    }
    save_comparison_json(cfg.out_dir + "/comparison.json", *cmp, to_string(kinds[0]),
                         to_string(kinds[1]));
    std::ofstream out(cfg.out_dir + "/comparison_per_seed.json");
    out << per_seed.dump(2) << "\n";
  }

  std::ofstream txt(cfg.out_dir + "/summary.txt");
  txt << render_text_summary(summary_reports, cmp ? &*cmp : nullptr);
  std::cout << "reports written to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_compare(const std::string& path_a, const std::string& path_b, const std::string& out_dir) {
  const TrainReport a = load_report_json(path_a);
  const TrainReport b = load_report_json(path_b);
  const ComparisonSummary cmp = compare_runs(a, b);
  fs::create_directories(out_dir);
  save_comparison_json(out_dir + "/comparison.json", cmp, to_string(a.loss), to_string(b.loss));
  std::ofstream txt(out_dir + "/summary.txt");
  txt << render_text_summary({a, b}, &cmp);
  std::cout << "task ratio " << cmp.final_task_ratio << ", comm ratio " << cmp.final_comm_ratio
            << "\n";
  return 0;
}

int cmd_report(const std::string& summary_path, const std::string& out_dir) {
  const TrainReport r = load_report_json(summary_path);
  emit_report(out_dir, "run_" + to_string(r.loss) + "_seed" + std::to_string(r.seed), r);
  std::ofstream txt(out_dir + "/summary.txt");
  txt << render_text_summary({r}, nullptr);
  std::cout << "reports written to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"topology-aware dispatch patterns for expert-parallel MoE"};
  app.require_subcommand(1);

  // solve
  auto* solve = app.add_subcommand("solve", "compute a target dispatch pattern");
  std::string topology_path, profile_path, out_dir = "out";
  bool exact = false;
  int k = 1, S = 120, N_flag = 0;
  double hidden = 250000.0, bytes = 4.0;
  solve->add_option("--topology", topology_path, "topology JSON")->required();
  solve->add_option("--profile", profile_path, "link profile CSV")->required();
  solve->add_option("--out", out_dir, "output directory");
  solve->add_flag("--exact", exact, "solve the LP with latency terms instead of the closed form");
  solve->add_option("--k", k, "experts per token");
  solve->add_option("--tokens", S, "tokens per process");
  solve->add_option("--experts", N_flag, "total experts (default: one per device)");
  solve->add_option("--hidden", hidden, "elements per token");
  solve->add_option("--bytes-per-element", bytes, "bytes per element");

  // cost
  auto* cost = app.add_subcommand("cost", "evaluate the exchange cost of a pattern");
  std::string pattern_path, cost_topology;
  cost->add_option("--pattern", pattern_path, "dispatch pattern JSON")->required();
  cost->add_option("--profile", profile_path, "link profile CSV")->required();
  cost->add_option("--topology", cost_topology, "topology JSON (for profile fill rules)");
  cost->add_option("--out", out_dir, "output directory");

  // fit
  auto* fit = app.add_subcommand("fit", "fit alpha/beta from timed transfers");
  std::string samples_path;
  int fit_devices = 0;
  fit->add_option("--samples", samples_path, "samples CSV (src,dst,message_mb,time_us)")
      ->required();
  fit->add_option("--topology", cost_topology, "topology JSON (for fill rules)");
  fit->add_option("--devices", fit_devices, "device count when no topology is given");
  fit->add_option("--out", out_dir, "output directory");

  // train
  auto* train_cmd = app.add_subcommand("train", "run the synthetic training experiment");
  TrainCli tcli;
  train_cmd->add_option("--config", tcli.config_path, "experiment config JSON")->required();
  train_cmd->add_option("--loss", tcli.losses, "loss kind(s): balance, topo (repeatable)");
  train_cmd->add_option("--seeds", tcli.seeds, "seed list")->delimiter(',');
  train_cmd->add_option("--out", tcli.out_dir, "output directory override");
  train_cmd->add_option("--norm", tcli.norm, "penalty normalization: sum, softmax");
  train_cmd->add_option("--temp", tcli.temperature, "softmax temperature");
  train_cmd->add_option("--capacity", tcli.capacity,
                        "capacity mode: none, global, local, proportional");
  train_cmd->add_option("--capacity-factor", tcli.capacity_factor, "capacity factor");
  train_cmd->add_flag("--exact", tcli.exact, "use the LP target instead of the closed form");

  // compare
  auto* compare = app.add_subcommand("compare", "compare two run summaries");
  std::string cmp_a, cmp_b;
  compare->add_option("a", cmp_a, "first run summary JSON")->required();
  compare->add_option("b", cmp_b, "second run summary JSON")->required();
  compare->add_option("--out", out_dir, "output directory");

  // report
  auto* report = app.add_subcommand("report", "re-emit report files from a run summary");
  std::string summary_path;
  report->add_option("summary", summary_path, "run summary JSON")->required();
  report->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (solve->parsed())
      return cmd_solve(topology_path, profile_path, out_dir, exact, k, S, N_flag, hidden, bytes);
    if (cost->parsed()) return cmd_cost(pattern_path, profile_path, cost_topology, out_dir);
    if (fit->parsed()) return cmd_fit(samples_path, cost_topology, out_dir, fit_devices);
    if (train_cmd->parsed()) return cmd_train(tcli);
    if (compare->parsed()) return cmd_compare(cmp_a, cmp_b, out_dir);
    if (report->parsed()) return cmd_report(summary_path, out_dir);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
