#include <gtest/gtest.h>

#include "ehrtraj/evaluation.hpp"
#include "tiny.hpp"

using namespace ehrtraj;

namespace {

// Looks up the true next hour of the full record.
class Truth : public StepPredictor {
 public:
  explicit Truth(const std::vector<PatientRecord>& cohort) : cohort_(cohort) {}
  StepPrediction predict(const PatientRecord& record, int t, Rng&) override {
    for (const auto& r : cohort_) {
      if (r.patient_id == record.patient_id) return {render_output(label_at(r, t + 1)), {10, 4}};
    }
    return {};
  }

 private:
  const std::vector<PatientRecord>& cohort_;
};

class Silent : public StepPredictor {
 public:
  StepPrediction predict(const PatientRecord&, int, Rng&) override { return {"(none)\n", {}}; }
};

std::vector<std::string> ids_of(const std::vector<PatientRecord>& cohort) {
  std::vector<std::string> ids;
  for (const auto& r : cohort) ids.push_back(r.patient_id);
  return ids;
}

}  // namespace

TEST(FeatureStats, FrequenciesAreLabelShares) {
  const auto cohort = generate_cohort(fixtures::tiny_cohort(20, 3));
  const auto s = FeatureStats::fit(cohort);
  std::size_t labels = 0, hr = 0;
  double hr_sum = 0;
  const FeatureKey key{Unit::ED, "Vital Signs", "Heart Rate"};
  for (const auto& r : cohort) {
    for (int h = 1; h <= r.total_hours; ++h) {
      ++labels;
      const auto l = label_at(r, h);
      if (auto it = l.values.find(key); it != l.values.end()) {
        ++hr;
        hr_sum += std::get<Decimal>(it->second).to_double();
      }
    }
  }
  EXPECT_EQ(s.labels, labels);
  EXPECT_DOUBLE_EQ(s.freq.at(key), double(hr) / double(labels));
  EXPECT_NEAR(s.mean.at(key), hr_sum / double(hr), 1e-9);
  EXPECT_TRUE(s.mode.count({Unit::ED, "Vital Signs", "Rhythm"}));
}

TEST(StatisticBaseline, SamplesAtTheFittedRate) {
  const auto cohort = generate_cohort(fixtures::tiny_cohort(20, 3));
  const auto stats = FeatureStats::fit(cohort);
  StatisticBaseline b(stats);
  Rng rng(4);
  const FeatureKey key{Unit::ED, "Prescriptions", "Aspirin"};
  int hits = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto o = b.sample(rng);
    EXPECT_TRUE(o.states.empty());
    EXPECT_TRUE(o.los.empty());
    hits += o.events.count(key) ? 1 : 0;
  }
  EXPECT_NEAR(hits / double(n), stats.freq.at(key), 0.015);
}

TEST(NextStep, TruthScoresPerfectly) {
  const auto cohort = generate_cohort(fixtures::tiny_cohort(8, 5));
  Truth truth(cohort);
  NextStepOptions opts;
  opts.max_cases = 30;
  const auto r = evaluate_next_step(cohort, ids_of(cohort), truth, NormStats::fit(cohort), schema_of(cohort), opts);
  EXPECT_GT(r.cases, 0u);
  EXPECT_LE(r.cases, 30u);
  EXPECT_DOUBLE_EQ(r.events.micro, 1.0);
  EXPECT_DOUBLE_EQ(*r.mae.micro(), 0.0);
  EXPECT_DOUBLE_EQ(*r.value_acc, 1.0);
  EXPECT_DOUBLE_EQ(r.f1_ci->lo, 1.0);
  EXPECT_EQ(r.to_json()["input_tokens"]["max"].get<int>(), 4);
}

TEST(NextStep, SilenceDependsOnMatchMode) {
  const auto cohort = generate_cohort(fixtures::tiny_cohort(8, 5));
  Silent silent;
  NextStepOptions opts;
  opts.max_cases = 30;
  const auto norm = NormStats::fit(cohort);
  const auto strict = evaluate_next_step(cohort, ids_of(cohort), silent, norm, schema_of(cohort), opts);
  EXPECT_DOUBLE_EQ(strict.events.micro, 0.0);
  EXPECT_DOUBLE_EQ(*strict.mae.micro(), 1.0);
  opts.score.mode = MatchMode::MatchedOnly;
  const auto lenient = evaluate_next_step(cohort, ids_of(cohort), silent, norm, schema_of(cohort), opts);
  EXPECT_EQ(lenient.mae.count(), 0u);
  EXPECT_DOUBLE_EQ(lenient.events.micro, 0.0);
}

TEST(ScoreCase, ToleranceMatchesNeighbouringHour) {
  const FeatureKey key{Unit::ED, "Vital Signs", "Heart Rate"};
  NormStats norm;
  norm.ranges[key.to_string()] = {60.0, 100.0};
  TimestepOutput pred, truth;
  pred.values[key] = Decimal::from_double(90);
  truth.values[key] = Decimal::from_double(80);
  CaseSeries c;
  c.add(pred, 5, true, norm, UnknownFeaturePolicy::Skip);
  c.add(truth, 6, false, norm, UnknownFeaturePolicy::Skip);
  MetricReport report;
  F1Accumulator f1;
  const auto s = score_case(c, {MatchMode::MissingIsMaxError, 1, UnknownFeaturePolicy::Skip}, f1, report);
  ASSERT_TRUE(s.mae);
  EXPECT_NEAR(*s.mae, 0.25, 1e-12);
  MetricReport strict;
  const auto s0 = score_case(c, {MatchMode::MissingIsMaxError, 0, UnknownFeaturePolicy::Skip}, f1, strict);
  EXPECT_NEAR(*s0.mae, 1.0, 1e-12);
}
