#pragma once

#include "drst/dr.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace drst::metrics {

/// One method's row of the results table. Cells that do not apply to a
/// method are NaN (written as empty CSV cells).
///
/// variance is the population variance of tau_hat (divide by R), so that
/// mse = bias^2 + variance holds exactly up to rounding.
struct MetricRow {
  std::string method;
  double bias = 0.0;
  double variance = 0.0;
  double mse = 0.0;
  double coverage_pct = 0.0;
  double pe = 0.0;
  int replications = 0;
  int failures = 0;
};

/// Aggregates per-replication estimates and predictive errors. Values are
/// summed in sorted order, so the result does not depend on input order.
/// `pe_values` may be empty, in which case pe is NaN.
MetricRow aggregate(double tau_true, std::span<const dr::DrEstimate> estimates,
                    std::span<const double> pe_values, std::string method = {});

/// Row for a method that only predicts: every tau cell is NaN.
MetricRow prediction_only(std::span<const double> pe_values, std::string method = {});

inline constexpr const char* kCsvHeader = "method,bias,variance,mse,coverage_pct,pe,replications";

void write_csv(std::ostream& out, const std::vector<MetricRow>& rows);
void write_text(std::ostream& out, const std::vector<MetricRow>& rows);

}  // namespace drst::metrics
