#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "ehrtraj/sampling.hpp"

using namespace ehrtraj;

namespace {

PatientRecord stay(std::string id, int hours) {
  PatientRecord r;
  r.patient_id = std::move(id);
  r.total_hours = hours;
  auto& f = r.units[Unit::ED].categories["Vital Signs"].features;
  f["Heart Rate"].kind = FeatureKind::Numeric;
  for (int h = 0; h <= hours; ++h) f["Heart Rate"].entries.push_back({h, Decimal::from_hundredths(8000)});
  r.state_events = {{hours, StateKind::EDDischarge}};
  return r;
}

}  // namespace

TEST(Weights, FormulaExamples) {
  SampleWeightTable table;
  table.n_train_labels = 10;
  EXPECT_DOUBLE_EQ(compute_weight({}, table), 1.0);
  TimestepOutput one;
  one.events.insert({Unit::ED, "C", "F"});
  table.event_freq["ED|C|F"] = 1.0;
  EXPECT_NEAR(compute_weight(one, table), 1.0 + std::log(2.0), 1e-12);
  EXPECT_NEAR(compute_weight(one, table), 1.693, 1e-3);
  auto disch = one;
  disch.states = {StateKind::HospDischarge};
  EXPECT_NEAR(compute_weight(disch, table), 4.0 * (1.0 + std::log(2.0)), 1e-12);
  // Unseen keys use 1 / N.
  TimestepOutput unseen;
  unseen.events.insert({Unit::ICU, "C", "G"});
  EXPECT_NEAR(compute_weight(unseen, table), 1.0 + std::log(11.0), 1e-12);
}

TEST(Weights, AtLeastOneAndMonotoneInFrequency) {
  SampleWeightTable table;
  table.n_train_labels = 100;
  TimestepOutput l;
  l.events.insert({Unit::ED, "C", "F"});
  double prev = INFINITY;
  for (double f : {0.01, 0.05, 0.2, 0.5, 1.0}) {
    table.event_freq["ED|C|F"] = f;
    const double w = compute_weight(l, table);
    EXPECT_GE(w, 1.0);
    EXPECT_LE(w, prev);
    prev = w;
  }
}

TEST(Weights, TableBuildAndJson) {
  std::vector<PatientRecord> cohort{stay("a", 3), stay("b", 5)};
  const auto table = SampleWeightTable::build(cohort);
  EXPECT_EQ(table.n_train_labels, 8u);
  EXPECT_DOUBLE_EQ(table.freq("ED|Vital Signs|Heart Rate"), 1.0);
  const auto back = SampleWeightTable::from_json(table.to_json());
  EXPECT_EQ(back.event_freq, table.event_freq);
  EXPECT_EQ(back.n_train_labels, table.n_train_labels);
}

TEST(Draw, RatioMatchesWeights) {
  // Two timepoints: an empty label (weight 1) and a transition label (weight 3).
  PatientRecord r;
  r.patient_id = "p";
  r.total_hours = 2;
  r.state_events = {{2, StateKind::ICUAdmit}};
  SampleWeightTable table;
  table.transition_boost = 3.0;
  table.n_train_labels = 2;
  Rng rng(10);
  const std::size_t n = 100000;
  const auto draws = draw_samples({r}, table, n, rng);
  std::size_t second = 0;
  for (const auto& d : draws) second += d.t == 1;
  const double p = static_cast<double>(second) / n;
  const double sd = std::sqrt(0.75 * 0.25 / n);
  EXPECT_NEAR(p, 0.75, 4 * sd);
}

TEST(Draw, SingleDeterministicAndErrors) {
  SampleWeightTable table;
  Rng rng(1);
  auto one = draw_samples({stay("a", 1)}, table, 50, rng);
  for (const auto& d : one) EXPECT_EQ(d, (TimePoint{0, 0}));
  std::vector<PatientRecord> cohort{stay("a", 6), stay("b", 9)};
  Rng r1(42), r2(42);
  EXPECT_EQ(draw_samples(cohort, table, 200, r1), draw_samples(cohort, table, 200, r2));
  EXPECT_THROW(draw_samples({}, table, 1, rng), std::invalid_argument);
  EXPECT_THROW(draw_samples(cohort, table, 0, rng), std::invalid_argument);
}

TEST(Split, SizesDisjointDeterministic) {
  std::vector<std::string> ids;
  for (int i = 0; i < 100; ++i) ids.push_back("p" + std::to_string(i));
  Rng r1(7), r2(7);
  const auto a = fixed_eval_split(ids, {}, r1);
  const auto b = fixed_eval_split(ids, {}, r2);
  EXPECT_EQ(a.train.size(), 95u);
  EXPECT_EQ(a.val.size(), 3u);
  EXPECT_EQ(a.test.size(), 2u);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  std::set<std::string> all(a.train.begin(), a.train.end());
  for (const auto& s : a.val) EXPECT_TRUE(all.insert(s).second);
  for (const auto& s : a.test) EXPECT_TRUE(all.insert(s).second);
  EXPECT_EQ(all.size(), 100u);
  Rng r3(1);
  EXPECT_THROW(fixed_eval_split({"a", "b"}, {}, r3), std::invalid_argument);
}

TEST(Split, SizesSumAcrossCohortSizes) {
  for (std::size_t n = 40; n < 400; n += 13) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    Rng rng(n);
    const auto s = fixed_eval_split(ids, {}, rng);
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), n);
    EXPECT_LE(std::abs(static_cast<double>(s.val.size()) - 0.025 * n), 1.0);
  }
}

TEST(EvalTimepoints, UniformWithinBinomialBounds) {
  std::vector<PatientRecord> cohort{stay("a", 10), stay("b", 10)};
  std::map<TimePoint, int> counts;
  const int trials = 4000;
  for (int i = 0; i < trials; ++i) {
    Rng rng(static_cast<std::uint64_t>(i));
    for (const auto& tp : eval_timepoints(cohort, {"a", "b"}, 5, rng)) ++counts[tp];
  }
  ASSERT_EQ(counts.size(), 20u);
  const double p = 5.0 / 20.0;
  const double sd = std::sqrt(trials * p * (1 - p));
  for (const auto& [tp, c] : counts) EXPECT_NEAR(c, trials * p, 4.5 * sd);
  Rng rng(3);
  EXPECT_EQ(eval_timepoints(cohort, {"b"}, 100, rng).size(), 10u);
}
