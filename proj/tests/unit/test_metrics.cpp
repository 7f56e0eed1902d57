#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ehrtraj/metrics.hpp"
#include "ehrtraj/synth.hpp"
#include "metric_oracles.hpp"

using namespace ehrtraj;

namespace {

std::set<std::string> to_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::vector<std::string> random_keys(Rng& rng, int universe) {
  std::vector<std::string> out;
  for (int k = 0; k < universe; ++k) {
    if (bernoulli(rng, 0.3)) out.push_back("f" + std::to_string(k));
  }
  return out;
}

}  // namespace

TEST(Metrics, NormalizeExamples) {
  EXPECT_DOUBLE_EQ(normalize(50, 50, 150), 0.0);
  EXPECT_DOUBLE_EQ(normalize(150, 50, 150), 1.0);
  EXPECT_DOUBLE_EQ(normalize(400, 50, 150), 1.0);
  EXPECT_DOUBLE_EQ(normalize(-4, 50, 150), 0.0);
  EXPECT_DOUBLE_EQ(normalize(75, 50, 150), 0.25);
  EXPECT_DOUBLE_EQ(normalize(7, 3, 3), 0.5);
}

TEST(Metrics, NormalizeUnknownFeature) {
  NormStats s;
  s.ranges["a"] = {0, 10};
  EXPECT_DOUBLE_EQ(*normalize(s, "a", 5), 0.5);
  EXPECT_FALSE(normalize(s, "b", 5).has_value());
  EXPECT_DOUBLE_EQ(*normalize(s, "b", 0.3, UnknownFeaturePolicy::Identity), 0.3);
}

TEST(Metrics, PercentileLinear) {
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(percentile({0, 10}, 0.25), 2.5);
  EXPECT_DOUBLE_EQ(percentile({4}, 0.99), 4.0);
  std::vector<double> v;
  for (int i = 0; i <= 100; ++i) v.push_back(i);
  EXPECT_NEAR(percentile(v, 0.01), 1.0, 1e-12);
  EXPECT_NEAR(percentile(v, 0.99), 99.0, 1e-12);
}

TEST(Metrics, NormStatsFitOnCohort) {
  auto cfg = CohortConfig::defaults();
  cfg.n_patients = 5;
  const auto cohort = generate_cohort(cfg);
  const auto stats = NormStats::fit(cohort);
  EXPECT_FALSE(stats.ranges.empty());
  for (const auto& [k, r] : stats.ranges) EXPECT_LE(r.first, r.second) << k;
  EXPECT_EQ(NormStats::from_json(stats.to_json()).ranges, stats.ranges);
}

TEST(Metrics, F1Examples) {
  auto r = event_f1({{"HR", "RR"}}, {{"HR", "Temp"}});
  EXPECT_DOUBLE_EQ(r.micro, 0.5);
  r = event_f1({{"HR"}}, {{"HR"}});
  EXPECT_DOUBLE_EQ(r.micro, 1.0);
  EXPECT_DOUBLE_EQ(*r.macro, 1.0);
  r = event_f1({{}, {}}, {{}, {}});
  EXPECT_DOUBLE_EQ(r.micro, 1.0);
  EXPECT_FALSE(r.macro.has_value());
}

TEST(Metrics, MaeExamples) {
  std::vector<TimedValue<double>> p{{10, 0.5}};
  EXPECT_NEAR(*modified_mae(p, {10, 0.4}, 1), 0.1, 1e-12);
  EXPECT_DOUBLE_EQ(*modified_mae({}, {10, 0.4}, 1), 1.0);
  EXPECT_FALSE(modified_mae({}, {10, 0.4}, 1, MatchMode::MatchedOnly).has_value());
  std::vector<TimedValue<double>> late{{11, 0.5}};
  EXPECT_NEAR(*modified_mae(late, {10, 0.4}, 1), 0.1, 1e-12);
  EXPECT_DOUBLE_EQ(*modified_mae(late, {10, 0.4}, 0), 1.0);
  // tie resolves to the earlier hour
  std::vector<TimedValue<double>> both{{11, 0.9}, {9, 0.3}};
  EXPECT_NEAR(*modified_mae(both, {10, 0.4}, 1), 0.1, 1e-12);
}

TEST(Metrics, AccuracyExamples) {
  EXPECT_DOUBLE_EQ(*modified_accuracy({}, {3, "a"}, 1), 0.0);
  std::vector<TimedValue<std::string>> p{{3, "a"}};
  EXPECT_DOUBLE_EQ(*modified_accuracy(p, {3, "a"}, 1), 1.0);
  std::vector<TimedValue<std::string>> q{{4, "a"}};
  EXPECT_DOUBLE_EQ(*modified_accuracy(q, {3, "a"}, 1), 1.0);
  EXPECT_DOUBLE_EQ(*modified_accuracy(q, {3, "A"}, 1), 0.0);
}

TEST(Metrics, BootstrapTrivialCases) {
  Rng rng(1);
  std::vector<double> c(20, 0.7);
  auto ci = bootstrap_ci(c, 0.95, 500, rng);
  EXPECT_DOUBLE_EQ(ci.lo, 0.7);
  EXPECT_DOUBLE_EQ(ci.hi, 0.7);
  std::vector<double> one{0.3};
  ci = bootstrap_ci(one, 0.95, 500, rng);
  EXPECT_DOUBLE_EQ(ci.lo, 0.3);
  EXPECT_DOUBLE_EQ(ci.hi, 0.3);
}

TEST(Metrics, BootstrapDeterministicUnderSeed) {
  std::vector<double> x;
  Rng g(4);
  for (int i = 0; i < 50; ++i) x.push_back(uniform01(g));
  Rng a(9), b(9);
  const auto ca = bootstrap_ci(x, 0.95, 1000, a);
  const auto cb = bootstrap_ci(x, 0.95, 1000, b);
  EXPECT_EQ(ca.lo, cb.lo);
  EXPECT_EQ(ca.hi, cb.hi);
  EXPECT_LT(ca.lo, ca.hi);
}

TEST(Metrics, TokenAccounting625) {
  const auto c = section_accounting(5000, SummaryLayout{8, 5000});
  EXPECT_EQ(c.input_tokens, 8u);
  EXPECT_DOUBLE_EQ(c.ratio(), 625.0);
  EXPECT_EQ(section_accounting(5001, SummaryLayout{8, 5000}).input_tokens, 16u);
  EXPECT_EQ(section_accounting(0, SummaryLayout{8, 5000}).input_tokens, 8u);
}

TEST(MetricsOracle, EventF1Random) {
  Rng rng(11);
  for (int inst = 0; inst < 500; ++inst) {
    const int cases = static_cast<int>(uniform_int(rng, 0, 10));
    const int universe = static_cast<int>(uniform_int(rng, 1, 10));
    std::vector<std::vector<std::string>> p, t;
    std::vector<std::set<std::string>> ps, ts;
    for (int c = 0; c < cases; ++c) {
      p.push_back(random_keys(rng, universe));
      t.push_back(random_keys(rng, universe));
      ps.push_back(to_set(p.back()));
      ts.push_back(to_set(t.back()));
    }
    const auto want = oracle::event_f1(p, t);
    const auto got = event_f1(ps, ts);
    ASSERT_NEAR(got.micro, want.micro, 1e-9);
    ASSERT_EQ(got.macro.has_value(), want.macro.has_value());
    if (want.macro) ASSERT_NEAR(*got.macro, *want.macro, 1e-9);
  }
}

TEST(MetricsOracle, MaeAndAccuracyRandom) {
  Rng rng(12);
  for (int inst = 0; inst < 500; ++inst) {
    const int tol = static_cast<int>(uniform_int(rng, 0, 2));
    const bool matched_only = bernoulli(rng, 0.5);
    const MatchMode mode = matched_only ? MatchMode::MatchedOnly : MatchMode::MissingIsMaxError;
    const int npred = static_cast<int>(uniform_int(rng, 0, 4));
    std::vector<std::pair<int, double>> pv;
    std::vector<std::pair<int, std::string>> pc;
    std::vector<TimedValue<double>> tv;
    std::vector<TimedValue<std::string>> tc;
    std::set<int> used;
    for (int i = 0; i < npred; ++i) {
      const int h = static_cast<int>(uniform_int(rng, 0, 9));
      if (!used.insert(h).second) continue;
      const double v = uniform01(rng);
      const std::string c = "c" + std::to_string(uniform_int(rng, 0, 2));
      pv.push_back({h, v});
      pc.push_back({h, c});
      tv.push_back({h, v});
      tc.push_back({h, c});
    }
    const int th = static_cast<int>(uniform_int(rng, 0, 9));
    const double truth = uniform01(rng);
    const std::string tcat = "c" + std::to_string(uniform_int(rng, 0, 2));
    const auto want = oracle::mae(pv, th, truth, tol, matched_only);
    const auto got = modified_mae(tv, {th, truth}, tol, mode);
    ASSERT_EQ(got.has_value(), want.has_value());
    if (want) {
      ASSERT_NEAR(*got, *want, 1e-9);
      ASSERT_GE(*got, 0.0);
      ASSERT_LE(*got, 1.0);
    }
    const auto wa = oracle::accuracy(pc, th, tcat, tol, matched_only);
    const auto ga = modified_accuracy(tc, {th, tcat}, tol, mode);
    ASSERT_EQ(ga.has_value(), wa.has_value());
    if (wa) ASSERT_NEAR(*ga, *wa, 1e-9);
  }
}

TEST(MetricsOracle, BootstrapEnumerationRandom) {
  Rng rng(13);
  for (int inst = 0; inst < 500; ++inst) {
    const int n = static_cast<int>(uniform_int(rng, 1, 5));
    std::vector<double> x;
    for (int i = 0; i < n; ++i) x.push_back(std::round(uniform01(rng) * 100) / 100);
    const double level = bernoulli(rng, 0.5) ? 0.95 : 0.9;
    std::size_t total = 1;
    for (int i = 0; i < n; ++i) total *= static_cast<std::size_t>(n);
    Rng unused(0);
    const auto got = bootstrap_ci(x, level, total, unused);
    const auto want = oracle::bootstrap_exact(x, level);
    ASSERT_NEAR(got.lo, want.first, 1e-9);
    ASSERT_NEAR(got.hi, want.second, 1e-9);
  }
}

TEST(Metrics, ReportSerialises) {
  MetricReport r;
  r.mode = std::string(match_mode_name(MatchMode::MissingIsMaxError));
  F1Accumulator acc;
  acc.add({"a"}, {"a", "b"});
  r.events = acc.result();
  r.mae.add("x", 0.2);
  r.mae.add("x", 0.4);
  r.mae.add("y", 1.0);
  r.add_tokens({100, 100});
  r.add_tokens({300, 20});
  const auto j = r.to_json();
  EXPECT_NEAR(j["mae_micro"].get<double>(), 1.6 / 3, 1e-12);
  EXPECT_NEAR(j["mae_macro"].get<double>(), (0.3 + 1.0) / 2, 1e-12);
  EXPECT_EQ(j["context_tokens"]["max"].get<int>(), 300);
  EXPECT_DOUBLE_EQ(j["input_tokens"]["avg"].get<double>(), 60.0);
  EXPECT_NE(r.table().find("F1 micro/macro"), std::string::npos);
  EXPECT_NE(r.per_feature_csv().find("\"b\",0,0,1"), std::string::npos);
}
