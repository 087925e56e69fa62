#include "orient/metrics.hpp"

#include "orient/error.hpp"

namespace orient {
namespace {

struct Accumulator {
  std::size_t hits = 0;
  std::size_t n = 0;
  double sum = 0.0;

  void add(double err, double threshold) {
    ++n;
    sum += err;
    if (err < threshold) ++hits;
  }

  MetricSummary summary() const {
    return {100.0 * static_cast<double>(hits) / static_cast<double>(n), sum / static_cast<double>(n), n};
  }
};

nlohmann::json summary_json(const MetricSummary& s) {
  return {{"acc30", s.acc_at_30}, {"abs", s.abs_err}, {"n", s.n}};
}

}  // namespace

double record_error_deg(const EvalRecord& record) {
  return record.stick_like ? front_direction_error_deg(record.pred, record.gt)
                           : rotation_error_deg(record.pred, record.gt);
}

MetricsReport aggregate_metrics(std::span<const EvalRecord> records, double threshold_deg) {
  if (records.empty()) throw Error(ErrorCode::kEmptyInput, "no evaluation records");
  Accumulator overall;
  std::map<std::string, Accumulator> per_category;
  for (const EvalRecord& r : records) {
    const double err = record_error_deg(r);
    overall.add(err, threshold_deg);
    per_category[r.category].add(err, threshold_deg);
  }
  MetricsReport report;
  report.threshold_deg = threshold_deg;
  report.overall = overall.summary();
  for (const auto& [name, acc] : per_category) report.per_category[name] = acc.summary();
  return report;
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [name, s] : report.per_category) per[name] = summary_json(s);
  return {{"schema", 1},
          {"threshold_deg", report.threshold_deg},
          {"overall", summary_json(report.overall)},
          {"per_category", per}};
}

}  // namespace orient
