#include <gtest/gtest.h>

#include "ehrtraj/vocab.hpp"

using namespace ehrtraj;

TEST(Vocab, PretokenizeGrammarText) {
  const auto p = pretokenize("ICU:\n    Heart Rate: 10-4: 82");
  const std::vector<std::string> want{"ICU", ":", "\n    ", "Heart", " Rate", ":", " 10", "-", "4", ":", " 82"};
  EXPECT_EQ(p, want);
}

TEST(Vocab, BuildsPiecesAndRoundTrips) {
  const std::vector<std::string> corpus{"Heart Rate: 82"};
  const auto v = Vocab::build(corpus);
  EXPECT_TRUE(v.find("Heart"));
  EXPECT_TRUE(v.find(" Rate"));
  EXPECT_TRUE(v.find(" 82"));
  EXPECT_TRUE(v.find(":"));
  EXPECT_TRUE(v.encode("").empty());
  for (const std::string s : {"Heart Rate: 82", "Heart Rate: 83\n  x", "Rate Heart:: 8", "\xff\x01 ok"}) {
    const auto ids = v.encode(s);
    EXPECT_EQ(v.decode(ids), s);
    for (int id : ids) EXPECT_FALSE(Vocab::is_reserved(id));
  }
  // " Heart" is unseen but "Heart" is known.
  const auto ids = v.encode("Heart Heart");
  EXPECT_EQ(ids.size(), 3u);
}

TEST(Vocab, ReservedDecodeToNothingAndJson) {
  const std::vector<std::string> corpus{"a bb ccc bb"};
  const auto v = Vocab::build(corpus);
  const std::vector<int> ids{kBos, *v.find(" bb"), kSum, kEos};
  EXPECT_EQ(v.decode(ids), " bb");
  EXPECT_EQ(Vocab::from_json(v.to_json()), v);
  EXPECT_EQ(v.size(), kNumReserved + 256 + 2);
}

TEST(Vocab, Deterministic) {
  const std::vector<std::string> corpus{"b a b c", "c c a"};
  EXPECT_EQ(Vocab::build(corpus), Vocab::build(corpus));
}
