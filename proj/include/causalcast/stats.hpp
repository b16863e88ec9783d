#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace causalcast::stats {

/// Singular values below this fraction of the largest count as zero.
inline constexpr double kRankTolerance = 1e-10;

struct OlsFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd residuals;
  double rss = 0.0;
  std::size_t n_obs = 0;
  std::size_t n_params = 0;
};

/// Least squares via Householder QR. Throws `Error(RankDeficient)` when the
/// design's smallest singular value is below kRankTolerance * largest, and
/// `Error(InvalidArgument)` unless n > k.
OlsFit ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response);

/// Singular values of `design` in decreasing order (computed from its R factor).
Eigen::VectorXd singular_values(const Eigen::MatrixXd& design);

/// Indices of the columns to keep so the remaining design is numerically full
/// rank. Repeatedly drops the column that loads most heavily on the smallest
/// right singular vector. Columns listed in `protect` are dropped last.
std::vector<std::size_t> independent_columns(const Eigen::MatrixXd& design,
                                             std::span<const std::size_t> protect = {});

/// RSS of the restricted model `base` and of the full model [base, extra],
/// computed from one QR so that `restricted >= full` holds exactly.
struct NestedRss {
  double restricted = 0.0;
  double full = 0.0;
};
NestedRss nested_rss(const Eigen::MatrixXd& base, const Eigen::MatrixXd& extra,
                     const Eigen::VectorXd& response);

struct CITestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t effective_dof = 0;
  /// Residual variance vanished; reported as independence (p = 1).
  bool degenerate = false;
};

/// Partial correlation of x and y given `conditioning` (intercept added),
/// with a two-sided t test on n - k - 2 degrees of freedom.
CITestResult partial_correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                 const Eigen::MatrixXd& conditioning);

/// p-value of a correlation coefficient `r` with `dof` degrees of freedom.
double correlation_p_value(double r, std::size_t dof);

double f_cdf(double x, double d1, double d2);
double t_cdf(double x, double dof);
/// Upper tail 1 - f_cdf, evaluated without cancellation.
double f_sf(double x, double d1, double d2);

/// Step-up FDR procedure. Returns the rejection mask.
std::vector<bool> benjamini_hochberg(std::span<const double> p_values, double alpha);

/// BH-adjusted p-values (q-values), monotone and capped at 1.
std::vector<double> bh_adjust(std::span<const double> p_values);

}  // namespace causalcast::stats
