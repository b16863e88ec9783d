#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "causalcast/dataset.hpp"

namespace testing_support {

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("causalcast_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::string> names(std::size_t n, const std::string& prefix = "v") {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

inline causalcast::TimeSeriesDataset make_dataset(const Eigen::MatrixXd& values,
                                                  causalcast::Frequency f = causalcast::Frequency::Monthly,
                                                  causalcast::Date start = {2000, 1, 1},
                                                  std::vector<std::string> vars = {},
                                                  std::string target = {}) {
  if (vars.empty()) vars = names(static_cast<std::size_t>(values.cols()));
  if (target.empty()) target = vars.back();
  std::vector<causalcast::Date> dates;
  for (Eigen::Index t = 0; t < values.rows(); ++t) {
    dates.push_back(f == causalcast::Frequency::Daily ? start.plus_days(long(t)) : start.plus_months(int(t)));
  }
  return {std::move(vars), std::move(dates), values, f, std::move(target)};
}

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  }
  return m;
}

/// Upper binomial bound used by the calibration tests: n*p + 2*sqrt(n*p*(1-p)).
inline double binomial_upper(double n, double p) { return n * p + 2.0 * std::sqrt(n * p * (1.0 - p)); }

}  // namespace testing_support
