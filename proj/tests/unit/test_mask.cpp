#include <gtest/gtest.h>

#include "ehrtraj/mask.hpp"

using namespace ehrtraj;

TEST(Mask, ZeroInputsIsCausal) {
  for (int m = 1; m <= 3; ++m) {
    for (int o = 0; o <= 4; ++o) EXPECT_EQ(bottleneck_mask({0, m, o}), AttnMask::causal(m + o));
  }
}

TEST(Mask, WorkedExample) {
  const auto mask = bottleneck_mask({2, 1, 1});
  EXPECT_FALSE(mask.allowed(3, 0));
  EXPECT_FALSE(mask.allowed(3, 1));
  EXPECT_TRUE(mask.allowed(3, 2));
  EXPECT_TRUE(mask.allowed(3, 3));
}

TEST(Mask, DiagonalAlwaysSet) {
  for (int n = 0; n <= 5; ++n) {
    const auto mask = bottleneck_mask({n, 2, 3});
    for (int i = 0; i < mask.size(); ++i) EXPECT_TRUE(mask.allowed(i, i));
  }
}

TEST(Mask, SpecValidation) {
  EXPECT_THROW((MaskSpec{1, 0, 1}.check(10)), std::invalid_argument);
  EXPECT_THROW((MaskSpec{8, 2, 1}.check(10)), std::invalid_argument);
  EXPECT_NO_THROW((MaskSpec{7, 2, 1}.check(10)));
}

// Region view: inputs and summaries are causal among themselves, outputs see
// summaries plus earlier outputs and never the inputs.
TEST(Mask, MatchesRegionOracle) {
  for (int n = 0; n <= 6; ++n) {
    for (int m = 1; m <= 3; ++m) {
      for (int o = 0; o <= 5; ++o) {
        const auto mask = bottleneck_mask({n, m, o});
        for (int i = 0; i < n + m + o; ++i) {
          for (int j = 0; j < n + m + o; ++j) {
            bool expect = j <= i;
            if (i >= n + m && j < n) expect = false;
            EXPECT_EQ(mask.allowed(i, j), expect) << n << ' ' << m << ' ' << o << ' ' << i << ' ' << j;
          }
        }
      }
    }
  }
}
