#pragma once

#include <string>

#include "tadispatch/matrix.hpp"

namespace tad {

// Shape parameters of one expert-parallel exchange.
struct DispatchConfig {
  int k = 1;         // experts selected per token
  int S = 0;         // tokens per process
  int N = 0;         // experts total
  int P = 0;         // processes / devices
  double d = 1.0;    // hidden size (elements per token)
  double b = 4.0;    // bytes per element

  int experts_per_device() const { return N / P; }
  double tokens_per_row() const { return static_cast<double>(k) * S; }       // row target, k*S
  double tokens_per_expert() const { return tokens_per_row() / experts_per_device(); }  // column target, k*S/E
  double mb_per_token() const { return d * b / 1e6; }
  void validate() const;
};

// Token counts sent from each process to each expert. Entries are real for
// target patterns and integral for realized routing.
struct DispatchMatrix {
  Matrix c;  // P x N
  DispatchConfig config;

  int device_of_expert(int e) const { return e / config.experts_per_device(); }
  // Tokens process i sends to device j, all experts combined.
  double device_payload_tokens(int i, int j) const;
  void validate() const;
};

// Uniform pattern c_ie = k*S/N; satisfies both exchange constraints.
DispatchMatrix even_pattern(const DispatchConfig& config);

// Row/column constraint residuals, relative to k*S and k*S/E.
struct FeasibilityReport {
  double row_residual = 0.0;
  double col_residual = 0.0;
  bool rows_ok(double tol = 1e-9) const { return row_residual < tol; }
  bool cols_ok(double tol = 1e-9) const { return col_residual < tol; }
};

FeasibilityReport check_constraints(const Matrix& c, const DispatchConfig& config);

// Plain CSV (P rows x N columns) plus a JSON envelope carrying the shape
// metadata and the matrix itself.
void save_dispatch_csv(const std::string& path, const DispatchMatrix& dm);
DispatchMatrix load_dispatch_json(const std::string& path);
void save_dispatch_json(const std::string& path, const DispatchMatrix& dm,
                        const std::string& source, const FeasibilityReport& feas);

}  // namespace tad
