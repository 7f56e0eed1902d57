#include <gtest/gtest.h>

#include "ehrtraj/decimal.hpp"

using ehrtraj::Decimal;

TEST(Decimal, RoundsHalfToEven) {
  EXPECT_EQ(Decimal::from_double(0.125).hundredths(), 12);
  EXPECT_EQ(Decimal::from_double(0.375).hundredths(), 38);
  EXPECT_EQ(Decimal::from_double(-0.125).hundredths(), -12);
  EXPECT_EQ(Decimal::from_double(82.0).hundredths(), 8200);
}

TEST(Decimal, RendersMinimalAndFractional) {
  EXPECT_EQ(Decimal::from_hundredths(8200).to_string(), "82");
  EXPECT_EQ(Decimal::from_hundredths(8200).to_string_fractional(), "82.0");
  EXPECT_EQ(Decimal::from_hundredths(8250).to_string(), "82.5");
  EXPECT_EQ(Decimal::from_hundredths(725).to_string_fractional(), "7.25");
  EXPECT_EQ(Decimal::from_hundredths(-5).to_string(), "-0.05");
  EXPECT_EQ(Decimal::from_hundredths(0).to_string_fractional(), "0.0");
}

TEST(Decimal, ParsesAndRejects) {
  EXPECT_EQ(Decimal::parse("82.0")->hundredths(), 8200);
  EXPECT_EQ(Decimal::parse("-7.25")->hundredths(), -725);
  EXPECT_EQ(Decimal::parse("3")->hundredths(), 300);
  EXPECT_FALSE(Decimal::parse("eighty"));
  EXPECT_FALSE(Decimal::parse("1.234"));
  EXPECT_FALSE(Decimal::parse("1."));
  EXPECT_FALSE(Decimal::parse(""));
  EXPECT_FALSE(Decimal::parse("."));
}

TEST(Decimal, TextRoundTrip) {
  for (std::int64_t h = -2000; h <= 2000; h += 7) {
    const auto d = Decimal::from_hundredths(h);
    EXPECT_EQ(Decimal::parse(d.to_string()), d);
    EXPECT_EQ(Decimal::parse(d.to_string_fractional()), d);
  }
}
