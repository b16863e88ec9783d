#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace causalcast {

/// Gregorian calendar date. Thin value wrapper over `std::chrono::sys_days`
/// so ordering and day arithmetic come for free.
class Date {
 public:
  constexpr Date() = default;
  Date(int year, unsigned month, unsigned day);
  explicit constexpr Date(std::chrono::sys_days days) : days_(days) {}

  /// Parses `YYYY-MM-DD`. Throws `Error(InvalidArgument)` on malformed or
  /// impossible dates.
  static Date parse(std::string_view text);

  int year() const;
  unsigned month() const;
  unsigned day() const;

  std::chrono::sys_days sys_days() const { return days_; }
  std::string iso() const;

  Date plus_days(long n) const;
  Date first_of_month() const;
  Date plus_months(int n) const;

  /// Number of months from `*this` to `other` (ignoring the day of month).
  int months_until(const Date& other) const;
  long days_until(const Date& other) const;

  friend constexpr auto operator<=>(const Date&, const Date&) = default;
  friend constexpr bool operator==(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

}  // namespace causalcast
