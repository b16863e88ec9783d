#include "causalcast/metrics.hpp"

#include <cmath>
#include <string>

#include "causalcast/error.hpp"

namespace causalcast {

namespace {

void check(std::span<const double> pred, std::span<const double> obs) {
  if (pred.size() != obs.size()) {
    throw Error(ErrorCode::ShapeError, "pred has " + std::to_string(pred.size()) + " values, obs has " +
                                           std::to_string(obs.size()));
  }
  if (obs.empty()) throw Error(ErrorCode::InvalidArgument, "metrics need at least one value");
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s / double(v.size());
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> obs) {
  check(pred, obs);
  double s = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) s += (pred[i] - obs[i]) * (pred[i] - obs[i]);
  return std::sqrt(s / double(obs.size()));
}

double mae(std::span<const double> pred, std::span<const double> obs) {
  check(pred, obs);
  double s = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) s += std::abs(pred[i] - obs[i]);
  return s / double(obs.size());
}

double r2(std::span<const double> pred, std::span<const double> obs) {
  check(pred, obs);
  const double m = mean_of(obs);
  double ss_res = 0.0, ss_tot = 0.0;
  bool constant = true;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    ss_res += (pred[i] - obs[i]) * (pred[i] - obs[i]);
    ss_tot += (obs[i] - m) * (obs[i] - m);
    constant = constant && obs[i] == obs[0];
  }
  if (constant || ss_tot == 0.0) throw Error(ErrorCode::DegenerateR2, "observations have zero variance");
  return 1.0 - ss_res / ss_tot;
}

PercentageMetrics percentage_metrics(double rmse_value, double mae_value, std::span<const double> obs) {
  if (obs.empty()) throw Error(ErrorCode::InvalidArgument, "percentage metrics need observations");
  const double m = mean_of(obs);
  if (m == 0.0) throw Error(ErrorCode::DegeneratePercentage, "mean of observations is zero");
  return {100.0 * rmse_value / m, 100.0 * mae_value / m};
}

}  // namespace causalcast
