#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "causalcast/dataset.hpp"
#include "causalcast/error.hpp"
#include "support.hpp"

using namespace causalcast;
using testing_support::make_dataset;

namespace {

const double kMissing = std::numeric_limits<double>::quiet_NaN();

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

TimeSeriesDataset parse(const std::string& text, std::string_view target = "SIE",
                        Frequency f = Frequency::Monthly) {
  std::istringstream in(text);
  return parse_csv(in, target, f);
}

bool same(const TimeSeriesDataset& a, const TimeSeriesDataset& b) {
  if (a.variable_names() != b.variable_names() || a.timestamps() != b.timestamps()) return false;
  if (a.values().rows() != b.values().rows() || a.values().cols() != b.values().cols()) return false;
  for (Eigen::Index i = 0; i < a.values().size(); ++i) {
    const double x = a.values().data()[i], y = b.values().data()[i];
    if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
  }
  return a.target_name() == b.target_name() && a.frequency() == b.frequency();
}

Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST_SUITE("core-data") {

TEST_CASE("csv with three rows and two variables") {
  const auto d = parse("date,T2M,SIE\n2000-01-01,1.5,10\n2000-02-01,2.5,11\n2000-03-01,3.5,12\n");
  CHECK(d.rows() == 3);
  CHECK(d.cols() == 2);
  CHECK(d.variable_names() == std::vector<std::string>{"T2M", "SIE"});
  CHECK(d.target_index() == 1);
  CHECK(d.values()(2, 0) == 3.5);
  CHECK(d.missing_count() == 0);
}

TEST_CASE("empty cell is flagged missing at its coordinate") {
  const auto d = parse("date,T2M,SIE\n2000-01-01,1,10\n2000-02-01,2,\n2000-03-01,3,12\n");
  CHECK(d.missing_count() == 1);
  CHECK(d.is_missing(1, 1));
  CHECK_FALSE(d.is_missing(1, 0));
}

TEST_CASE("unsorted rows load like the sorted file") {
  const std::string header = "date,A,SIE\n";
  std::vector<std::string> rows;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  for (int m = 0; m < 24; ++m) {
    std::ostringstream r;
    r.precision(17);
    r << Date(2001, 1, 1).plus_months(m).iso() << "," << n(rng) << "," << (m % 5 == 0 ? "" : std::to_string(m));
    rows.push_back(r.str());
  }
  std::string sorted = header;
  for (const auto& r : rows) sorted += r + "\n";
  std::shuffle(rows.begin(), rows.end(), rng);
  std::string shuffled = header;
  for (const auto& r : rows) shuffled += r + "\n";
  CHECK(same(parse(shuffled), parse(sorted)));
}

TEST_CASE("csv errors") {
  CHECK(code_of([] { parse("date,SIE\n2000-01-01,1\n2000-01-01,2\n"); }) == ErrorCode::DuplicateTimestamp);
  CHECK(code_of([] { parse("date,SIE\n2000-01-01,1\n2000-02-01,x\n"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse("date,A\n2000-01-01,1\n", "SIE"); }) == ErrorCode::UnknownTarget);
  try {
    parse("date,A,SIE\n2000-01-01,1,2\n2000-02-01,3,abc\n");
    FAIL("no throw");
  } catch (const ParseError& e) {
    CHECK(e.row() == 2);
    CHECK(e.column() == 2);
  }
}

TEST_CASE("calendar gaps become missing rows") {
  const auto d = parse("date,SIE\n2000-01-01,1\n2000-03-01,3\n");
  REQUIRE(d.rows() == 3);
  CHECK(d.timestamps()[1] == Date(2000, 2, 1));
  CHECK(d.is_missing(1, 0));
}

TEST_CASE("csv write then read is lossless") {
  testing_support::TempDir dir("csv");
  Eigen::MatrixXd v = testing_support::gaussian(30, 3, 5);
  v(4, 1) = std::numeric_limits<double>::quiet_NaN();
  const auto d = make_dataset(v, Frequency::Daily, {2010, 2, 20});
  save_csv(d, dir / "x.csv");
  CHECK(same(load_csv(dir / "x.csv", d.target_name(), Frequency::Daily), d));
}

TEST_CASE("constructor enforces invariants") {
  CHECK(code_of([] {
          TimeSeriesDataset({"a"}, {Date(2000, 1, 1), Date(2000, 1, 3)}, Eigen::MatrixXd::Zero(2, 1),
                            Frequency::Daily, "a");
        }) == ErrorCode::IrregularSpacing);
  CHECK(code_of([] {
          TimeSeriesDataset({"a"}, {Date(2000, 1, 1)}, Eigen::MatrixXd::Zero(1, 1), Frequency::Daily, "b");
        }) == ErrorCode::UnknownTarget);
}

TEST_CASE("impute examples") {
  const double nan = kMissing;
  auto run = [](Eigen::MatrixXd v) { return impute(make_dataset(v)).values(); };
  CHECK(run(column({1, nan, 3})) == column({1, 2, 3}));
  CHECK(run(column({nan, 5, 5})) == column({5, 5, 5}));
  CHECK(run(column({2, nan, nan, 8})) == column({2, 4, 6, 8}));
  CHECK(run(column({nan, 1, nan, 3, nan, nan})) == column({1, 1, 2, 3, 3, 3}));
  CHECK(code_of([&] { run(column({nan, nan})); }) == ErrorCode::AllMissingColumn);
}

TEST_CASE("impute leaves no missing values and keeps observed ones") {
  Eigen::MatrixXd v = testing_support::gaussian(200, 4, 9);
  std::mt19937_64 rng(3);
  std::bernoulli_distribution drop(0.3);
  Eigen::MatrixXd holes = v;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (drop(rng)) holes.data()[i] = kMissing;
  }
  for (Eigen::Index c = 0; c < 4; ++c) holes(50, c) = v(50, c);
  const auto out = impute(make_dataset(holes));
  CHECK(out.missing_count() == 0);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isnan(holes.data()[i])) CHECK(out.values().data()[i] == holes.data()[i]);
  }
}

TEST_CASE("normalization examples") {
  Eigen::MatrixXd v(3, 2);
  v << 1, 4, 2, 4, 3, 4;
  const auto d = make_dataset(v, Frequency::Monthly, {2000, 1, 1});
  const SplitSpec split{{2000, 12, 1}, 0.1, {2001, 1, 1}, {2001, 12, 1}};
  const auto stats = fit_normalization(d, split);
  CHECK(stats.mean[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(stats.std[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
  CHECK(stats.std[0] == doctest::Approx(0.8165).epsilon(1e-4));
  CHECK(stats.mean[1] == 4.0);
  CHECK(stats.std[1] == 0.0);
  const auto z = apply_normalization(d, stats).values();
  CHECK(z(0, 0) == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(z(1, 0) == 0.0);
  CHECK(z(2, 0) == doctest::Approx(1.2247).epsilon(1e-4));
  CHECK(z.col(1).isZero(0.0));

  const SplitSpec early{{1999, 1, 1}, 0.1, {2001, 1, 1}, {2001, 12, 1}};
  CHECK(code_of([&] { fit_normalization(d, early); }) == ErrorCode::EmptySplit);

  auto other = stats;
  other.variables = {"p", "q"};
  CHECK(code_of([&] { apply_normalization(d, other); }) == ErrorCode::StatsMismatch);
}

TEST_CASE("normalization uses only training rows") {
  const auto d = make_dataset(testing_support::gaussian(240, 3, 21), Frequency::Monthly, {1995, 1, 1});
  for (const Date cut : {Date(1999, 6, 1), Date(2003, 12, 1), Date(2013, 12, 31)}) {
    const SplitSpec split{cut, 0.1, cut.plus_days(1), cut.plus_days(400)};
    const auto full = fit_normalization(d, split);
    const auto trunc = d.truncate_after(cut);
    for (std::size_t c = 0; c < 3; ++c) {
      const Eigen::VectorXd x = trunc.values().col(Eigen::Index(c));
      const double mean = x.mean();
      const double sd = std::sqrt((x.array() - mean).square().mean());
      CHECK(full.mean[c] == doctest::Approx(mean).epsilon(1e-13));
      CHECK(full.std[c] == doctest::Approx(sd).epsilon(1e-13));
    }
    CHECK(full.fitted_to <= cut);
  }
}

TEST_CASE("invert after apply is the identity") {
  Eigen::MatrixXd v = testing_support::gaussian(100, 3, 4) * 7.0;
  v.array() += 40.0;
  const auto d = make_dataset(v);
  const SplitSpec split{{2004, 12, 1}, 0.1, {2005, 1, 1}, {2008, 1, 1}};
  const auto stats = fit_normalization(d, split);
  const auto z = apply_normalization(d, stats);
  for (std::size_t c = 0; c < 3; ++c) {
    const Eigen::VectorXd zc = z.values().col(Eigen::Index(c));
    const auto back = invert_normalization(std::span<const double>(zc.data(), std::size_t(zc.size())), stats, d.variable_names()[c]);
    for (Eigen::Index t = 0; t < v.rows(); ++t) CHECK(std::abs(back[std::size_t(t)] - v(t, Eigen::Index(c))) < 1e-12);
  }
  CHECK(code_of([&] { invert_normalization(std::vector<double>{1.0}, stats, "nope"); }) ==
        ErrorCode::StatsMismatch);
}

TEST_CASE("normalization stats json round trip") {
  const auto d = make_dataset(testing_support::gaussian(40, 2, 8));
  const auto stats = fit_normalization(d, {{2002, 1, 1}, 0.1, {2002, 2, 1}, {2003, 1, 1}});
  const auto back = normalization_from_json(to_json(stats));
  CHECK(back.variables == stats.variables);
  CHECK(back.mean == stats.mean);
  CHECK(back.std == stats.std);
  CHECK(back.fitted_to == stats.fitted_to);
}

TEST_CASE("aggregation examples") {
  Eigen::MatrixXd jan = Eigen::MatrixXd::Constant(31, 1, 3.25);
  auto m = aggregate_daily_to_monthly(make_dataset(jan, Frequency::Daily, {2001, 1, 1}));
  CHECK(m.rows() == 1);
  CHECK(m.values()(0, 0) == 3.25);
  CHECK(m.timestamps()[0] == Date(2001, 1, 1));
  CHECK(m.frequency() == Frequency::Monthly);

  jan = Eigen::MatrixXd::Constant(31, 1, 1.0);
  jan(30, 0) = 32.0;
  m = aggregate_daily_to_monthly(make_dataset(jan, Frequency::Daily, {2001, 1, 1}));
  CHECK(m.values()(0, 0) == 2.0);

  CHECK(code_of([&] { aggregate_daily_to_monthly(m); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("aggregation matches an independent group-by") {
  const Eigen::MatrixXd v = testing_support::gaussian(90, 2, 17);
  const Date start{2003, 1, 15};
  const auto m = aggregate_daily_to_monthly(make_dataset(v, Frequency::Daily, start));
  std::map<std::pair<int, unsigned>, std::pair<Eigen::Vector2d, int>> groups;
  for (int t = 0; t < 90; ++t) {
    const Date d = start.plus_days(t);
    auto& g = groups[{d.year(), d.month()}];
    if (g.second == 0) g.first.setZero();
    g.first += v.row(t).transpose();
    ++g.second;
  }
  REQUIRE(m.rows() == groups.size());
  CHECK(m.rows() == 4);
  std::size_t i = 0;
  for (const auto& [key, g] : groups) {
    CHECK(m.timestamps()[i] == Date(key.first, key.second, 1));
    for (Eigen::Index c = 0; c < 2; ++c) {
      CHECK(m.values()(Eigen::Index(i), c) == doctest::Approx(g.first(c) / g.second).epsilon(1e-14));
    }
    ++i;
  }

  const auto three = aggregate_daily_to_monthly(make_dataset(testing_support::gaussian(90, 1, 2),
                                                             Frequency::Daily, {2003, 1, 1}));
  CHECK(three.rows() == 3);
}

TEST_CASE("monthly mean times days equals the daily sum") {
  const Eigen::MatrixXd v = testing_support::gaussian(731, 1, 23).array() + 5.0;
  const Date start{2004, 1, 1};
  const auto m = aggregate_daily_to_monthly(make_dataset(v, Frequency::Daily, start));
  std::size_t t = 0;
  for (std::size_t k = 0; k < m.rows(); ++k) {
    const Date first = m.timestamps()[k];
    const long days = first.days_until(first.plus_months(1));
    double sum = 0.0;
    for (long d = 0; d < days; ++d) sum += v(Eigen::Index(t++), 0);
    CHECK(std::abs(m.values()(Eigen::Index(k), 0) * double(days) - sum) <= 1e-9 * std::abs(sum));
  }
  CHECK(t == 731);
}

TEST_CASE("window counts") {
  const std::vector<std::string> f{"v0"};
  auto d = make_dataset(testing_support::gaussian(22, 1, 1));
  CHECK(build_lag_windows(d, f, 21, 1).size() == 1);
  d = make_dataset(testing_support::gaussian(100, 1, 1), Frequency::Daily);
  CHECK(build_lag_windows(d, f, 21, 30).size() == 50);
  CHECK(code_of([&] { build_lag_windows(d, f, 80, 30); }) == ErrorCode::InsufficientHistory);
  CHECK(code_of([&] { build_lag_windows(d, std::vector<std::string>{"zz"}, 3, 1); }) ==
        ErrorCode::UnknownVariable);
}

TEST_CASE("windows align with a ramp") {
  const Eigen::Index T = 60;
  Eigen::MatrixXd v(T, 2);
  for (Eigen::Index t = 0; t < T; ++t) {
    v(t, 0) = 100.0 + double(t);
    v(t, 1) = 1000.0 + 2.0 * double(t);
  }
  const auto d = make_dataset(v, Frequency::Monthly, {1990, 1, 1}, {"a", "y"});
  const std::size_t tau = 7, lead = 4;
  const auto w = build_lag_windows(d, std::vector<std::string>{"y", "a"}, tau, lead);
  REQUIRE(w.size() == std::size_t(T) - tau - lead + 1);
  for (std::size_t s = 0; s < w.size(); ++s) {
    const auto win = w.window(s);
    for (std::size_t k = 0; k < tau; ++k) {
      CHECK(win[2 * k] == 1000.0 + 2.0 * double(s + k));
      CHECK(win[2 * k + 1] == 100.0 + double(s + k));
    }
    CHECK(w.targets[s] == 1000.0 + 2.0 * double(s + tau + lead - 1));
    CHECK(w.sample_dates[s] == Date(1990, 1, 1).plus_months(int(s + tau + lead - 1)));
  }
}

TEST_CASE("overlapping windows reconstruct the series") {
  const Eigen::MatrixXd v = testing_support::gaussian(80, 3, 31);
  const auto d = make_dataset(v);
  const auto names = d.variable_names();
  const std::size_t tau = 5;
  const auto w = build_lag_windows(d, names, tau, 2);
  Eigen::MatrixXd rebuilt = Eigen::MatrixXd::Constant(v.rows(), 3, kMissing);
  for (std::size_t s = 0; s < w.size(); ++s) {
    const auto win = w.window(s);
    for (std::size_t k = 0; k < tau; ++k) {
      for (std::size_t c = 0; c < 3; ++c) rebuilt(Eigen::Index(s + k), Eigen::Index(c)) = win[k * 3 + c];
    }
  }
  const Eigen::Index covered = Eigen::Index(w.size() + tau - 1);
  CHECK(rebuilt.topRows(covered) == v.topRows(covered));
  for (std::size_t s = 0; s < w.size(); ++s) CHECK(w.targets[s] == v(Eigen::Index(s + tau + 1), 2));
}

TEST_CASE("split counts and boundary") {
  LagWindowSet w;
  w.lookback = 1;
  w.lead = 1;
  w.feature_names = {"y"};
  Date d{2005, 1, 1};
  for (int i = 0; i < 110; ++i) {
    w.inputs.push_back(i);
    w.targets.push_back(i);
    w.sample_dates.push_back(d.plus_months(i));
  }
  const SplitSpec split{Date(2005, 1, 1).plus_months(99), 0.1, Date(2005, 1, 1).plus_months(100), Date(2020, 1, 1)};
  const auto parts = split_windows(w, split);
  CHECK(parts.train.size() == 90);
  CHECK(parts.validation.size() == 10);
  CHECK(parts.test.size() == 10);
  CHECK(parts.validation.targets.front() == 90.0);

  LagWindowSet edge;
  edge.lookback = 1;
  edge.lead = 1;
  edge.feature_names = {"y"};
  for (int i = 0; i < 20; ++i) {
    edge.inputs.push_back(i);
    edge.targets.push_back(i);
    edge.sample_dates.push_back(Date(2013, 12, 22).plus_days(i));
  }
  const SplitSpec paper{{2013, 12, 31}, 0.1, {2014, 1, 1}, {2018, 12, 31}};
  const auto e = split_windows(edge, paper);
  CHECK(e.validation.sample_dates.back() == Date(2013, 12, 31));
  CHECK(e.test.sample_dates.front() == Date(2014, 1, 1));

  const SplitSpec none{{2013, 12, 31}, 0.1, {2019, 1, 1}, {2019, 12, 31}};
  CHECK(code_of([&] { split_windows(edge, none); }) == ErrorCode::EmptySplit);
}

TEST_CASE("split partitions eligible samples") {
  const auto d = make_dataset(testing_support::gaussian(400, 2, 77), Frequency::Daily, {2013, 1, 1});
  const auto w = build_lag_windows(d, d.variable_names(), 21, 30);
  const SplitSpec split{{2013, 12, 31}, 0.1, {2014, 1, 15}, {2014, 12, 31}};
  const auto parts = split_windows(w, split);
  std::set<Date> seen;
  std::size_t total = 0;
  for (const auto* p : {&parts.train, &parts.validation, &parts.test}) {
    for (const auto& date : p->sample_dates) seen.insert(date);
    total += p->size();
  }
  CHECK(seen.size() == total);
  std::set<Date> eligible;
  for (const auto& date : w.sample_dates) {
    if (date <= split.train_end || (split.test_begin <= date && date <= split.test_end)) eligible.insert(date);
  }
  CHECK(seen == eligible);
  CHECK(parts.validation.sample_dates.back() < parts.test.sample_dates.front());
  CHECK(parts.train.sample_dates.back() < parts.validation.sample_dates.front());
  CHECK(parts.validation.size() == std::size_t(std::ceil(0.1 * double(parts.train.size() + parts.validation.size()))));
}

TEST_CASE("split spec validation") {
  const SplitSpec bad{{2014, 1, 1}, 0.1, {2014, 1, 1}, {2015, 1, 1}};
  CHECK_THROWS_AS(bad.validate(), Error);
  const SplitSpec frac{{2013, 1, 1}, 1.0, {2014, 1, 1}, {2015, 1, 1}};
  CHECK_THROWS_AS(frac.validate(), Error);
}

TEST_CASE("summary lists ranges and missing counts") {
  const auto d = parse("date,T2M,SIE\n2000-01-01,1,10\n2000-02-01,-2,\n2000-03-01,3,12\n");
  const auto s = dataset_summary(d);
  CHECK(s["rows"] == 3);
  CHECK(s["variables"][0]["name"] == "T2M");
  CHECK(s["variables"][0]["min"] == -2.0);
  CHECK(s["variables"][0]["max"] == 3.0);
  CHECK(s["variables"][1]["missing"] == 1);
  CHECK(s["variables"][1]["mean"] == 11.0);
}

}  // TEST_SUITE
