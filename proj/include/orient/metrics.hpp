#pragma once

#include <map>
#include <span>
#include <string>

#include <json.hpp>

#include "orient/geometry.hpp"

namespace orient {

struct EvalRecord {
  std::string object_id;
  std::string category;
  bool stick_like = false;
  Rotation gt;
  Rotation pred;
};

struct MetricSummary {
  double acc_at_30 = 0.0;  // percent
  double abs_err = 0.0;    // mean degrees
  std::size_t n = 0;
};

struct MetricsReport {
  MetricSummary overall;
  std::map<std::string, MetricSummary> per_category;
  double threshold_deg = 30.0;
};

/// Front-direction error for stick-like records, full rotation error otherwise.
double record_error_deg(const EvalRecord& record);

MetricsReport aggregate_metrics(std::span<const EvalRecord> records, double threshold_deg = 30.0);

nlohmann::json to_json(const MetricsReport& report);

}  // namespace orient
