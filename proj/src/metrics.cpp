#include "drst/metrics.hpp"

#include "drst/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace drst::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sorted_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double mean_pe(std::span<const double> pe_values) {
  if (pe_values.empty()) return kNaN;
  for (double v : pe_values) {
    if (!(v >= 0.0)) throw std::invalid_argument("aggregate: predictive error must be >= 0");
  }
  return sorted_mean({pe_values.begin(), pe_values.end()});
}

}  // namespace

MetricRow aggregate(double tau_true, std::span<const dr::DrEstimate> estimates, std::span<const double> pe_values,
                    std::string method) {
  if (estimates.empty()) throw std::invalid_argument("aggregate: no estimates");
  const auto R = static_cast<double>(estimates.size());
  std::vector<double> tau;
  tau.reserve(estimates.size());
  int covered = 0;
  for (const auto& e : estimates) {
    tau.push_back(e.tau_hat);
    if (e.covers(tau_true)) ++covered;
  }
  MetricRow row;
  row.method = std::move(method);
  row.replications = static_cast<int>(estimates.size());
  const double mean = sorted_mean(tau);
  std::vector<double> dev2, err2;
  for (double t : tau) {
    dev2.push_back((t - mean) * (t - mean));
    err2.push_back((t - tau_true) * (t - tau_true));
  }
  row.bias = mean - tau_true;
  row.variance = sorted_mean(dev2);
  row.mse = sorted_mean(err2);
  row.coverage_pct = 100.0 * covered / R;
  row.pe = mean_pe(pe_values);
  return row;
}

MetricRow prediction_only(std::span<const double> pe_values, std::string method) {
  if (pe_values.empty()) throw std::invalid_argument("prediction_only: no predictive errors");
  MetricRow row;
  row.method = std::move(method);
  row.bias = row.variance = row.mse = row.coverage_pct = kNaN;
  row.pe = mean_pe(pe_values);
  row.replications = static_cast<int>(pe_values.size());
  return row;
}

namespace {

std::string csv_cell(double v) {
  return std::isnan(v) ? std::string() : text::format_double(v);
}

std::string text_cell(double v, int precision) {
  if (std::isnan(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << csv_cell(r.bias) << ',' << csv_cell(r.variance) << ',' << csv_cell(r.mse) << ','
        << csv_cell(r.coverage_pct) << ',' << csv_cell(r.pe) << ',' << r.replications << '\n';
  }
}

void write_text(std::ostream& out, const std::vector<MetricRow>& rows) {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.method.size());
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %10s %10s %10s %12s %10s %6s %8s\n", static_cast<int>(w), "Method", "Bias",
                "Variance", "MSE", "Coverage(%)", "PE", "Reps", "Failed");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-*s %10s %10s %10s %12s %10s %6d %8d\n", static_cast<int>(w), r.method.c_str(),
                  text_cell(r.bias, 4).c_str(), text_cell(r.variance, 4).c_str(), text_cell(r.mse, 4).c_str(),
                  text_cell(r.coverage_pct, 1).c_str(), text_cell(r.pe, 4).c_str(), r.replications, r.failures);
    out << line;
  }
  out << "Variance divides by the number of replications, so MSE = Bias^2 + Variance.\n"
         "Coverage counts replications whose 95% Wald interval contains the true effect.\n";
}

}  // namespace drst::metrics
