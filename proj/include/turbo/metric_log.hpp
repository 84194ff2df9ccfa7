// SPDX-License-Identifier: Apache-2.0
//
// JSON-lines metric stream: one object per training step, plus evaluation
// records tagged with "eval": true.
#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "turbo/config.hpp"

namespace turbo {

struct StepMetrics {
  std::size_t step = 0;
  std::size_t epoch = 0;
  Task task = Task::classify;
  double loss_total = 0.0;
  std::optional<double> loss_ce;
  std::optional<double> loss_nce;
  double loss_pmae = 0.0;
  double lr = 0.0;
  double flops_gf = 0.0;  // forward GFLOPs for the whole batch
  double wall_ms = 0.0;
  double m = 0.0;
  double r = 0.0;
};

struct EvalMetric {
  Task task = Task::classify;
  std::size_t step = 0;
  std::string metric_name;
  double value = 0.0;
  double wall_seconds = 0.0;
};

std::string format_step(const StepMetrics& s);
std::string format_eval(const EvalMetric& e);

/// Keeps every line in memory and, when opened on a path, mirrors it to disk.
class MetricLog {
 public:
  MetricLog() = default;
  explicit MetricLog(const std::filesystem::path& path, bool append = false);

  void write_step(const StepMetrics& s);
  void write_eval(const EvalMetric& e);
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  void emit(std::string line);
  std::vector<std::string> lines_;
  std::ofstream file_;
};

/// The lines with timing fields (wall_ms, wall_seconds) removed, for
/// run-to-run comparison.
std::vector<std::string> without_timing(const std::vector<std::string>& lines);

}  // namespace turbo
