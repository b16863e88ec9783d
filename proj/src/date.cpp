#include "causalcast/date.hpp"

#include <charconv>
#include <cstdio>

#include "causalcast/error.hpp"

namespace causalcast {

namespace chr = std::chrono;

Date::Date(int year, unsigned month, unsigned day) {
  const chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
  if (!ymd.ok()) {
    throw Error(ErrorCode::InvalidArgument, "invalid calendar date " + std::to_string(year) + "-" +
                                                std::to_string(month) + "-" + std::to_string(day));
  }
  days_ = chr::sys_days{ymd};
}

Date Date::parse(std::string_view text) {
  auto fail = [&]() -> Date {
    throw Error(ErrorCode::InvalidArgument, "not an ISO-8601 date: '" + std::string(text) + "'");
  };
  // Tolerate a trailing time component ("2001-02-03T00:00:00").
  if (const auto t = text.find_first_of("T "); t != std::string_view::npos) text = text.substr(0, t);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return fail();
  int y = 0;
  unsigned m = 0, d = 0;
  const char* s = text.data();
  if (std::from_chars(s, s + 4, y).ec != std::errc{} ||
      std::from_chars(s + 5, s + 7, m).ec != std::errc{} ||
      std::from_chars(s + 8, s + 10, d).ec != std::errc{}) {
    return fail();
  }
  const chr::year_month_day ymd{chr::year{y}, chr::month{m}, chr::day{d}};
  if (!ymd.ok()) return fail();
  return Date(chr::sys_days{ymd});
}

int Date::year() const { return int(chr::year_month_day{days_}.year()); }
unsigned Date::month() const { return unsigned(chr::year_month_day{days_}.month()); }
unsigned Date::day() const { return unsigned(chr::year_month_day{days_}.day()); }

std::string Date::iso() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
  return buf;
}

Date Date::plus_days(long n) const { return Date(days_ + chr::days{n}); }

Date Date::first_of_month() const {
  const chr::year_month_day ymd{days_};
  return Date(chr::sys_days{ymd.year() / ymd.month() / chr::day{1}});
}

Date Date::plus_months(int n) const {
  const chr::year_month_day ymd{days_};
  chr::year_month_day shifted = ymd + chr::months{n};
  if (!shifted.ok()) {
    // Clamp to the end of the month (Jan 31 + 1 month -> Feb 28/29).
    shifted = chr::year_month_day{chr::year_month_day_last{shifted.year(),
                                                           chr::month_day_last{shifted.month()}}};
  }
  return Date(chr::sys_days{shifted});
}

int Date::months_until(const Date& other) const {
  return (other.year() - year()) * 12 + (int(other.month()) - int(month()));
}

long Date::days_until(const Date& other) const { return (other.days_ - days_).count(); }

}  // namespace causalcast
