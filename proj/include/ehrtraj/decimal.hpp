#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ehrtraj {

/// Fixed-point number with two fractional digits. Numeric feature values are
/// stored this way so that text rendering and parsing round-trip exactly.
class Decimal {
 public:
  constexpr Decimal() = default;

  static constexpr Decimal from_hundredths(std::int64_t h) {
    Decimal d;
    d.hundredths_ = h;
    return d;
  }

  /// Rounds half-to-even at the second fractional digit.
  static Decimal from_double(double v);

  /// Accepts an optional sign, digits, and at most two fractional digits.
  static std::optional<Decimal> parse(std::string_view text);

  constexpr std::int64_t hundredths() const { return hundredths_; }
  double to_double() const { return static_cast<double>(hundredths_) / 100.0; }

  /// Minimal form: "82", "82.5", "7.25".
  std::string to_string() const;
  /// Minimal form with at least one fractional digit: "82.0", "82.5".
  std::string to_string_fractional() const;

  friend constexpr auto operator<=>(Decimal, Decimal) = default;

 private:
  std::int64_t hundredths_ = 0;
};

}  // namespace ehrtraj
