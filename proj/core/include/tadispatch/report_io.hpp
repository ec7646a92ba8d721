#pragma once

#include <string>

#include "tadispatch/trainer.hpp"

namespace tad {

// Per-step time series: step,task_loss,aux_loss,t_comm_us,dropped_rate.
void save_series_csv(const std::string& path, const TrainReport& report);

// Window-averaged P x N dispatch counts, plot-ready.
void save_dispatch_heatmap_csv(const std::string& path, const TrainReport& report);

// Everything in one JSON document, including the series, so a report can
// be reloaded and re-rendered.
void save_report_json(const std::string& path, const TrainReport& report);
TrainReport load_report_json(const std::string& path);

void save_comparison_json(const std::string& path, const ComparisonSummary& cmp,
                          const std::string& label_a, const std::string& label_b);

// Human-readable one-page summary of one or two runs.
std::string render_text_summary(const std::vector<TrainReport>& reports,
                                const ComparisonSummary* cmp);

// All report files for one run under dir with the given file stem:
// <stem>_series.csv, <stem>_dispatch.csv, <stem>_summary.json.
void emit_report(const std::string& dir, const std::string& stem, const TrainReport& report);

}  // namespace tad
