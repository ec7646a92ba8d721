#include "tadispatch/report_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tadispatch/errors.hpp"

namespace tad {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m.at(i, j));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  if (j.empty()) return {};
  Matrix m(static_cast<int>(j.size()), static_cast<int>(j.at(0).size()));
  for (int i = 0; i < m.rows(); ++i)
    for (int c = 0; c < m.cols(); ++c) m.at(i, c) = j.at(i).at(c).get<double>();
  return m;
}

}  // namespace

void save_series_csv(const std::string& path, const TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write series CSV: " + path);
  out << "step,task_loss,aux_loss,t_comm_us,dropped_rate\n";
  for (size_t s = 0; s < report.task_loss.size(); ++s)
    out << s << ',' << fmt(report.task_loss[s]) << ',' << fmt(report.aux_loss[s]) << ','
        << fmt(report.comm_us[s]) << ',' << fmt(report.dropped_rate[s]) << '\n';
}

void save_dispatch_heatmap_csv(const std::string& path, const TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write dispatch CSV: " + path);
  const Matrix& m = report.final_dispatch;
  for (int i = 0; i < m.rows(); ++i) {
    for (int e = 0; e < m.cols(); ++e) out << (e ? "," : "") << fmt(m.at(i, e));
    out << "\n";
  }
}

void save_report_json(const std::string& path, const TrainReport& report) {
  json j;
  j["loss"] = to_string(report.loss);
  j["seed"] = report.seed;
  j["series"] = {{"task_loss", report.task_loss},
                 {"aux_loss", report.aux_loss},
                 {"t_comm_us", report.comm_us},
                 {"dropped_rate", report.dropped_rate}};
  j["initial_dispatch"] = matrix_to_json(report.initial_dispatch);
  j["final_dispatch"] = matrix_to_json(report.final_dispatch);
  j["metrics"] = {{"tv_rows", report.tv_rows},
                  {"tv_initial_mean", report.tv_initial_mean},
                  {"tv_final_mean", report.tv_final_mean},
                  {"col_balance_max_dev", report.col_balance_max_dev},
                  {"min_expert_load", report.min_expert_load},
                  {"intra_share", report.intra_share},
                  {"final_task_loss", report.final_task_loss},
                  {"final_aux_loss", report.final_aux_loss},
                  {"final_comm_us", report.final_comm_us},
                  {"dropped_total_rate", report.dropped_total_rate}};
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write report JSON: " + path);
  out << j.dump(2) << "\n";
}

TrainReport load_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open report JSON: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad report JSON: ") + e.what());
  }
  TrainReport r;
  try {
    r.loss = loss_kind_from_string(j.at("loss").get<std::string>());
    r.seed = j.at("seed").get<uint64_t>();
    const auto& s = j.at("series");
    r.task_loss = s.at("task_loss").get<std::vector<double>>();
    r.aux_loss = s.at("aux_loss").get<std::vector<double>>();
    r.comm_us = s.at("t_comm_us").get<std::vector<double>>();
    r.dropped_rate = s.at("dropped_rate").get<std::vector<double>>();
    r.initial_dispatch = matrix_from_json(j.at("initial_dispatch"));
    r.final_dispatch = matrix_from_json(j.at("final_dispatch"));
    const auto& m = j.at("metrics");
    r.tv_rows = m.at("tv_rows").get<std::vector<double>>();
    r.tv_initial_mean = m.at("tv_initial_mean").get<double>();
    r.tv_final_mean = m.at("tv_final_mean").get<double>();
    r.col_balance_max_dev = m.at("col_balance_max_dev").get<double>();
    r.min_expert_load = m.at("min_expert_load").get<double>();
    r.intra_share = m.at("intra_share").get<double>();
    r.final_task_loss = m.at("final_task_loss").get<double>();
    r.final_aux_loss = m.at("final_aux_loss").get<double>();
    r.final_comm_us = m.at("final_comm_us").get<double>();
    r.dropped_total_rate = m.at("dropped_total_rate").get<double>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad report JSON: ") + e.what());
  }
  return r;
}

void save_comparison_json(const std::string& path, const ComparisonSummary& cmp,
                          const std::string& label_a, const std::string& label_b) {
  json j;
  j["a"] = label_a;
  j["b"] = label_b;
  j["final_task_ratio"] = cmp.final_task_ratio;
  j["final_comm_ratio"] = cmp.final_comm_ratio;
  j["dispatch_tv_mean"] = cmp.dispatch_tv_mean;
  j["dispatch_tv_rows"] = cmp.dispatch_tv_rows;
  j["col_dev"] = {{label_a, cmp.col_dev_a}, {label_b, cmp.col_dev_b}};
  j["intra_share"] = {{label_a, cmp.intra_share_a}, {label_b, cmp.intra_share_b}};
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write comparison JSON: " + path);
  out << j.dump(2) << "\n";
}

std::string render_text_summary(const std::vector<TrainReport>& reports,
                                const ComparisonSummary* cmp) {
  std::ostringstream out;
  out << "run summary\n===========\n";
  for (const auto& r : reports) {
    out << "loss=" << to_string(r.loss) << " seed=" << r.seed << " steps=" << r.task_loss.size()
        << "\n";
    out << "  final task loss      " << fmt(r.final_task_loss) << "\n";
    out << "  final aux loss       " << fmt(r.final_aux_loss) << "\n";
    out << "  est. comm per step   " << fmt(r.final_comm_us) << " us\n";
    out << "  intra-group share    " << fmt(r.intra_share) << "\n";
    out << "  column balance dev   " << fmt(r.col_balance_max_dev) << "\n";
    out << "  min expert load      " << fmt(r.min_expert_load) << "\n";
    out << "  dropped-token rate   " << fmt(r.dropped_total_rate) << "\n";
    if (!r.tv_rows.empty())
      out << "  TV to target         " << fmt(r.tv_initial_mean) << " -> " << fmt(r.tv_final_mean)
          << "\n";
  }
  if (cmp) {
    out << "comparison (a / b)\n";
    out << "  task loss ratio      " << fmt(cmp->final_task_ratio) << "\n";
    out << "  comm ratio           " << fmt(cmp->final_comm_ratio) << "\n";
    out << "  dispatch TV          " << fmt(cmp->dispatch_tv_mean) << "\n";
    out << "  intra share          " << fmt(cmp->intra_share_a) << " vs " << fmt(cmp->intra_share_b)
        << "\n";
  }
  return out.str();
}

void emit_report(const std::string& dir, const std::string& stem, const TrainReport& report) {
  std::filesystem::create_directories(dir);
  const std::string base = dir + "/" + stem;
  save_series_csv(base + "_series.csv", report);
  save_dispatch_heatmap_csv(base + "_dispatch.csv", report);
  save_report_json(base + "_summary.json", report);
}

}  // namespace tad
