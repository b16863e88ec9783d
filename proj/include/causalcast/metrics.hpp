#pragma once

#include <span>

namespace causalcast {

double rmse(std::span<const double> pred, std::span<const double> obs);
double mae(std::span<const double> pred, std::span<const double> obs);
/// 1 - SS_res / SS_tot about the observation mean. Throws DegenerateR2 when
/// every observation is identical.
double r2(std::span<const double> pred, std::span<const double> obs);

struct PercentageMetrics {
  double rmse_pct = 0.0;
  double mae_pct = 0.0;
};

/// Both metrics as a percentage of mean(obs). Throws DegeneratePercentage when
/// mean(obs) == 0.
PercentageMetrics percentage_metrics(double rmse, double mae, std::span<const double> obs);

}  // namespace causalcast
