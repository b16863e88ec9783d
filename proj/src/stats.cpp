#include "causalcast/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>

#include "causalcast/error.hpp"

namespace causalcast::stats {

namespace {

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be finite");
}

bool rank_ok(const Eigen::VectorXd& sv) {
  if (sv.size() == 0) return true;
  const double top = sv(0);
  return top > 0.0 && sv(sv.size() - 1) >= kRankTolerance * top;
}

}  // namespace

Eigen::VectorXd singular_values(const Eigen::MatrixXd& design) {
  if (design.cols() == 0) return {};
  if (design.rows() < design.cols()) {
    return Eigen::JacobiSVD<Eigen::MatrixXd>(design).singularValues();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(design.cols()).triangularView<Eigen::Upper>();
  return Eigen::JacobiSVD<Eigen::MatrixXd>(r).singularValues();
}

OlsFit ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response) {
  const auto n = design.rows(), k = design.cols();
  if (response.size() != n) throw Error(ErrorCode::ShapeError, "response length differs from design rows");
  if (k == 0 || n <= k) {
    throw Error(ErrorCode::InvalidArgument, "least squares needs n > k >= 1 (n=" + std::to_string(n) +
                                                ", k=" + std::to_string(k) + ")");
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  if (!rank_ok(Eigen::JacobiSVD<Eigen::MatrixXd>(r).singularValues())) {
    throw Error(ErrorCode::RankDeficient, "design matrix is numerically rank deficient");
  }
  OlsFit fit;
  fit.coefficients = qr.solve(response);
  fit.residuals = response - design * fit.coefficients;
  fit.rss = fit.residuals.squaredNorm();
  fit.n_obs = static_cast<std::size_t>(n);
  fit.n_params = static_cast<std::size_t>(k);
  return fit;
}

std::vector<std::size_t> independent_columns(const Eigen::MatrixXd& design,
                                             std::span<const std::size_t> protect) {
  std::vector<std::size_t> keep(static_cast<std::size_t>(design.cols()));
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  auto is_protected = [&](std::size_t c) {
    return std::find(protect.begin(), protect.end(), c) != protect.end();
  };
  while (!keep.empty()) {
    Eigen::MatrixXd sub(design.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = design.col(static_cast<Eigen::Index>(keep[j]));
    Eigen::MatrixXd r;
    if (sub.rows() >= sub.cols()) {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(sub);
      r = qr.matrixQR().topRows(sub.cols()).triangularView<Eigen::Upper>();
    } else {
      r = sub;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(r, Eigen::ComputeFullV);
    if (rank_ok(svd.singularValues())) break;
    const Eigen::VectorXd v = svd.matrixV().col(svd.matrixV().cols() - 1).cwiseAbs();
    std::size_t worst = keep.size();
    for (int pass = 0; pass < 2 && worst == keep.size(); ++pass) {
      double best = -1.0;
      for (std::size_t j = 0; j < keep.size(); ++j) {
        if (pass == 0 && is_protected(keep[j])) continue;
        if (v(static_cast<Eigen::Index>(j)) > best) {
          best = v(static_cast<Eigen::Index>(j));
          worst = j;
        }
      }
    }
    keep.erase(keep.begin() + static_cast<long>(worst));
  }
  return keep;
}

NestedRss nested_rss(const Eigen::MatrixXd& base, const Eigen::MatrixXd& extra,
                     const Eigen::VectorXd& response) {
  const auto n = response.size();
  const auto kb = base.cols(), k = base.cols() + extra.cols();
  if (base.rows() != n || extra.rows() != n) throw Error(ErrorCode::ShapeError, "nested design rows differ");
  if (n <= k) throw Error(ErrorCode::InsufficientHistory, "nested regression needs n > k");
  Eigen::MatrixXd full(n, k);
  full << base, extra;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(full);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  if (!rank_ok(Eigen::JacobiSVD<Eigen::MatrixXd>(r).singularValues())) {
    throw Error(ErrorCode::RankDeficient, "nested design is numerically rank deficient");
  }
  // Q^T y: its leading k entries are the projections onto successive design
  // directions, the tail is the full-model residual in rotated coordinates.
  const Eigen::VectorXd c = qr.householderQ().adjoint() * response;
  NestedRss out;
  out.full = c.tail(n - k).squaredNorm();
  out.restricted = out.full + c.segment(kb, k - kb).squaredNorm();
  return out;
}

double correlation_p_value(double r, std::size_t dof) {
  if (dof == 0) throw Error(ErrorCode::InvalidArgument, "correlation test needs dof >= 1");
  const double r2 = std::min(1.0, r * r);
  if (r2 >= 1.0) return 0.0;
  // With t^2 = r^2 dof / (1 - r^2): P(|T| > |t|) = I_{1 - r^2}(dof/2, 1/2).
  return boost::math::ibeta(0.5 * double(dof), 0.5, 1.0 - r2);
}

CITestResult partial_correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                 const Eigen::MatrixXd& conditioning) {
  const auto n = x.size();
  const auto k = conditioning.cols();
  if (y.size() != n || (k > 0 && conditioning.rows() != n)) {
    throw Error(ErrorCode::ShapeError, "partial correlation inputs differ in length");
  }
  if (n <= k + 3) {
    throw Error(ErrorCode::InsufficientHistory, std::to_string(n) + " samples cannot support " +
                                                    std::to_string(k) + " conditioning columns");
  }
  Eigen::MatrixXd z(n, k + 1);
  if (k > 0) z.leftCols(k) = conditioning;
  z.col(k).setOnes();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
  qr.setThreshold(kRankTolerance);
  const Eigen::VectorXd ex = x - z * qr.solve(x);
  const Eigen::VectorXd ey = y - z * qr.solve(y);

  CITestResult res;
  res.effective_dof = static_cast<std::size_t>(n - k - 2);
  const double sx = ex.squaredNorm(), sy = ey.squaredNorm();
  if (sx <= 1e-20 * x.squaredNorm() || sy <= 1e-20 * y.squaredNorm() || sx == 0.0 || sy == 0.0) {
    res.degenerate = true;
    return res;
  }
  res.statistic = std::clamp(ex.dot(ey) / std::sqrt(sx * sy), -1.0, 1.0);
  res.p_value = correlation_p_value(res.statistic, res.effective_dof);
  return res;
}

double f_cdf(double x, double d1, double d2) {
  require_finite(x, "x");
  if (!(d1 >= 1.0 && d2 >= 1.0)) throw Error(ErrorCode::InvalidArgument, "F degrees of freedom must be >= 1");
  if (x <= 0.0) return 0.0;
  return boost::math::ibeta(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2));
}

double f_sf(double x, double d1, double d2) {
  require_finite(x, "x");
  if (!(d1 >= 1.0 && d2 >= 1.0)) throw Error(ErrorCode::InvalidArgument, "F degrees of freedom must be >= 1");
  if (x <= 0.0) return 1.0;
  return boost::math::ibeta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * x));
}

double t_cdf(double x, double dof) {
  require_finite(x, "x");
  if (!(dof >= 1.0)) throw Error(ErrorCode::InvalidArgument, "t degrees of freedom must be >= 1");
  if (x == 0.0) return 0.5;
  const double tail = 0.5 * boost::math::ibeta(0.5 * dof, 0.5, dof / (dof + x * x));
  return x > 0.0 ? 1.0 - tail : tail;
}

namespace {

std::vector<std::size_t> ascending_order(std::span<const double> p) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  return order;
}

void check_p_values(std::span<const double> p) {
  for (const double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, "p-values must lie in [0, 1]");
  }
}

}  // namespace

std::vector<bool> benjamini_hochberg(std::span<const double> p_values, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  check_p_values(p_values);
  const std::size_t m = p_values.size();
  const auto order = ascending_order(p_values);
  std::size_t cutoff = 0;  // number of rejections
  for (std::size_t rank = m; rank >= 1; --rank) {
    if (p_values[order[rank - 1]] <= double(rank) / double(m) * alpha) {
      cutoff = rank;
      break;
    }
  }
  std::vector<bool> reject(m, false);
  for (std::size_t i = 0; i < cutoff; ++i) reject[order[i]] = true;
  return reject;
}

std::vector<double> bh_adjust(std::span<const double> p_values) {
  check_p_values(p_values);
  const std::size_t m = p_values.size();
  const auto order = ascending_order(p_values);
  std::vector<double> q(m);
  double running = 1.0;
  for (std::size_t rank = m; rank >= 1; --rank) {
    const std::size_t i = order[rank - 1];
    running = std::min(running, std::max(p_values[i], p_values[i] * double(m) / double(rank)));
    q[i] = running;
  }
  return q;
}

}  // namespace causalcast::stats
