// SPDX-License-Identifier: Apache-2.0
#include "turbo/metric_log.hpp"

#include <json.hpp>

#include "turbo/errors.hpp"

namespace turbo {

using nlohmann::ordered_json;

std::string format_step(const StepMetrics& s) {
  ordered_json j;
  j["step"] = s.step;
  j["epoch"] = s.epoch;
  j["task"] = std::string(to_string(s.task));
  j["loss_total"] = s.loss_total;
  j["loss_ce"] = s.loss_ce ? ordered_json(*s.loss_ce) : ordered_json(nullptr);
  j["loss_nce"] = s.loss_nce ? ordered_json(*s.loss_nce) : ordered_json(nullptr);
  j["loss_pmae"] = s.loss_pmae;
  j["lr"] = s.lr;
  j["flops_gf"] = s.flops_gf;
  j["wall_ms"] = s.wall_ms;
  j["m"] = s.m;
  j["r"] = s.r;
  return j.dump();
}

std::string format_eval(const EvalMetric& e) {
  ordered_json j;
  j["eval"] = true;
  j["task"] = std::string(to_string(e.task));
  j["step"] = e.step;
  j["metric_name"] = e.metric_name;
  j["value"] = e.value;
  j["wall_seconds"] = e.wall_seconds;
  return j.dump();
}

MetricLog::MetricLog(const std::filesystem::path& path, bool append) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!file_) throw IoError("cannot open metric log " + path.string());
}

void MetricLog::write_step(const StepMetrics& s) { emit(format_step(s)); }
void MetricLog::write_eval(const EvalMetric& e) { emit(format_eval(e)); }

void MetricLog::emit(std::string line) {
  if (file_.is_open()) {
    file_ << line << '\n';
    file_.flush();
  }
  lines_.push_back(std::move(line));
}

std::vector<std::string> without_timing(const std::vector<std::string>& lines) {
  std::vector<std::string> out;
  out.reserve(lines.size());
  for (const auto& line : lines) {
    auto j = ordered_json::parse(line);
    j.erase("wall_ms");
    j.erase("wall_seconds");
    out.push_back(j.dump());
  }
  return out;
}

}  // namespace turbo
