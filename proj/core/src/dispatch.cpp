#include "tadispatch/dispatch.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tadispatch/errors.hpp"

namespace tad {

using nlohmann::json;

void DispatchConfig::validate() const {
  if (k < 1 || S < 1 || N < 1 || P < 1) throw ValidationError("k, S, N, P must be positive");
  if (N % P != 0) throw ValidationError("N must be divisible by P");
  if (k > N) throw ValidationError("k cannot exceed N");
  if (!(d > 0.0) || !(b > 0.0)) throw ValidationError("d and b must be positive");
}

double DispatchMatrix::device_payload_tokens(int i, int j) const {
  const int e0 = j * config.experts_per_device();
  double total = 0.0;
  for (int e = e0; e < e0 + config.experts_per_device(); ++e) total += c.at(i, e);
  return total;
}

void DispatchMatrix::validate() const {
  config.validate();
  if (c.rows() != config.P || c.cols() != config.N)
    throw ValidationError("dispatch matrix must be P x N");
  for (double v : c.data())
    if (!(v >= 0.0)) throw ValidationError("dispatch entries must be finite and nonnegative");
}

DispatchMatrix even_pattern(const DispatchConfig& config) {
  config.validate();
  DispatchMatrix dm;
  dm.config = config;
  dm.c = Matrix(config.P, config.N, config.tokens_per_row() / config.N);
  return dm;
}

FeasibilityReport check_constraints(const Matrix& c, const DispatchConfig& config) {
  FeasibilityReport r;
  const double row_target = config.tokens_per_row();
  const double col_target = config.tokens_per_expert();
  for (int i = 0; i < c.rows(); ++i)
    r.row_residual = std::max(r.row_residual, std::abs(c.row_sum(i) - row_target) / row_target);
  for (int e = 0; e < c.cols(); ++e)
    r.col_residual = std::max(r.col_residual, std::abs(c.col_sum(e) - col_target) / col_target);
  return r;
}

void save_dispatch_csv(const std::string& path, const DispatchMatrix& dm) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write dispatch CSV: " + path);
  char buf[64];
  for (int i = 0; i < dm.c.rows(); ++i) {
    for (int e = 0; e < dm.c.cols(); ++e) {
      std::snprintf(buf, sizeof(buf), "%.12g", dm.c.at(i, e));
      out << (e ? "," : "") << buf;
    }
    out << "\n";
  }
}

void save_dispatch_json(const std::string& path, const DispatchMatrix& dm,
                        const std::string& source, const FeasibilityReport& feas) {
  json j;
  j["k"] = dm.config.k;
  j["S"] = dm.config.S;
  j["N"] = dm.config.N;
  j["P"] = dm.config.P;
  j["d"] = dm.config.d;
  j["b"] = dm.config.b;
  j["source"] = source;
  j["feasibility"] = {{"row_residual", feas.row_residual}, {"col_residual", feas.col_residual}};
  json rows = json::array();
  for (int i = 0; i < dm.c.rows(); ++i) {
    json row = json::array();
    for (int e = 0; e < dm.c.cols(); ++e) row.push_back(dm.c.at(i, e));
    rows.push_back(row);
  }
  j["c"] = rows;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write dispatch JSON: " + path);
  out << j.dump(2) << "\n";
}

DispatchMatrix load_dispatch_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dispatch JSON: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad dispatch JSON: ") + e.what());
  }
  DispatchMatrix dm;
  try {
    dm.config.k = j.at("k").get<int>();
    dm.config.S = j.at("S").get<int>();
    dm.config.N = j.at("N").get<int>();
    dm.config.P = j.at("P").get<int>();
    dm.config.d = j.at("d").get<double>();
    dm.config.b = j.at("b").get<double>();
    const auto& rows = j.at("c");
    dm.c = Matrix(dm.config.P, dm.config.N);
    for (int i = 0; i < dm.config.P; ++i)
      for (int e = 0; e < dm.config.N; ++e) dm.c.at(i, e) = rows.at(i).at(e).get<double>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad dispatch JSON: ") + e.what());
  }
  dm.validate();
  return dm;
}

}  // namespace tad
