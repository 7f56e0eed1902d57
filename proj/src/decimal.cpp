#include "ehrtraj/decimal.hpp"

#include <cfenv>
#include <cmath>
#include <cstdlib>

namespace ehrtraj {

Decimal Decimal::from_double(double v) {
  const long double scaled = static_cast<long double>(v) * 100.0L;
  // nearbyint honours the current rounding mode, which defaults to
  // round-to-nearest-even.
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const long double r = std::nearbyint(scaled);
  std::fesetround(saved);
  return from_hundredths(static_cast<std::int64_t>(r));
}

std::optional<Decimal> Decimal::parse(std::string_view text) {
  if (text.empty()) return std::nullopt;
  bool negative = false;
  std::size_t i = 0;
  if (text[0] == '-' || text[0] == '+') {
    negative = text[0] == '-';
    ++i;
  }
  std::int64_t whole = 0;
  std::size_t digits = 0;
  for (; i < text.size() && text[i] >= '0' && text[i] <= '9'; ++i, ++digits) {
    if (whole > 1'000'000'000'000LL) return std::nullopt;
    whole = whole * 10 + (text[i] - '0');
  }
  if (digits == 0) return std::nullopt;
  std::int64_t frac = 0;
  if (i < text.size()) {
    if (text[i] != '.') return std::nullopt;
    ++i;
    std::size_t frac_digits = 0;
    for (; i < text.size() && text[i] >= '0' && text[i] <= '9'; ++i, ++frac_digits) {
      frac = frac * 10 + (text[i] - '0');
    }
    if (i != text.size() || frac_digits == 0 || frac_digits > 2) return std::nullopt;
    if (frac_digits == 1) frac *= 10;
  }
  const std::int64_t h = whole * 100 + frac;
  return from_hundredths(negative ? -h : h);
}

namespace {

std::string render(std::int64_t hundredths, bool force_fraction) {
  std::string out;
  std::uint64_t mag = static_cast<std::uint64_t>(hundredths < 0 ? -hundredths : hundredths);
  if (hundredths < 0) out.push_back('-');
  out += std::to_string(mag / 100);
  const unsigned frac = static_cast<unsigned>(mag % 100);
  if (frac == 0) {
    if (force_fraction) out += ".0";
  } else if (frac % 10 == 0) {
    out.push_back('.');
    out.push_back(static_cast<char>('0' + frac / 10));
  } else {
    out.push_back('.');
    out.push_back(static_cast<char>('0' + frac / 10));
    out.push_back(static_cast<char>('0' + frac % 10));
  }
  return out;
}

}  // namespace

std::string Decimal::to_string() const { return render(hundredths_, false); }
std::string Decimal::to_string_fractional() const { return render(hundredths_, true); }

}  // namespace ehrtraj
