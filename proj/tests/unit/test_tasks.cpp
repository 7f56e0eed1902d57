#include <gtest/gtest.h>

#include <set>

#include "ehrtraj/synth.hpp"
#include "ehrtraj/tasks.hpp"

using namespace ehrtraj;

namespace {

class Truth : public StepPredictor {
 public:
  explicit Truth(const std::vector<PatientRecord>& cohort) : cohort_(cohort) {}
  StepPrediction predict(const PatientRecord& record, int t, Rng&) override {
    for (const auto& r : cohort_) {
      if (r.patient_id == record.patient_id && t < r.total_hours) return {render_output(label_at(r, t + 1)), {}};
    }
    return {"(none)\n", {}};
  }

 private:
  const std::vector<PatientRecord>& cohort_;
};

const std::vector<PatientRecord>& cohort() {
  static const auto c = [] {
    auto cfg = CohortConfig::defaults();
    cfg.n_patients = 150;
    cfg.seed = 12;
    cfg.icu_hazard = 0.05;
    cfg.units[Unit::ICU].death_hazard = 0.02;
    return generate_cohort(cfg);
  }();
  return c;
}

std::vector<std::string> all_ids() {
  std::vector<std::string> ids;
  for (const auto& r : cohort()) ids.push_back(r.patient_id);
  return ids;
}

std::optional<UnitInterval> interval(const PatientRecord& r, Unit u) {
  for (const auto& iv : unit_intervals(r)) {
    if (iv.unit == u && iv.end) return iv;
  }
  return std::nullopt;
}

}  // namespace

TEST(Tasks, CatalogHasTenUniqueTasks) {
  const auto names = task_names();
  EXPECT_EQ(names.size(), 10u);
  EXPECT_EQ(std::set<std::string>(names.begin(), names.end()).size(), 10u);
  for (const auto& n : names) EXPECT_TRUE(find_task(n));
  EXPECT_FALSE(find_task("icu-lab-values"));
}

TEST(Tasks, ForecastCasesStayInsideTheUnit) {
  const auto task = *find_task("hospital-lab-values");
  Rng rng(1);
  const auto cases = task_cases(cohort(), all_ids(), task, 1000, rng);
  ASSERT_FALSE(cases.empty());
  std::set<std::size_t> patients;
  for (const auto& c : cases) {
    const auto iv = interval(cohort()[c.patient], Unit::Hospital);
    ASSERT_TRUE(iv);
    EXPECT_GE(c.t0, iv->start);
    EXPECT_LE(c.t0 + task.gap_hours + 1, *iv->end);
    EXPECT_EQ(c.window_end, std::min(c.t0 + task.gap_hours + task.window_hours, *iv->end));
    EXPECT_TRUE(patients.insert(c.patient).second) << "one case per stay";
  }
}

TEST(Tasks, OutcomeCasesAreBalancedAndLabelledByTheWindow) {
  const auto task = *find_task("icu-imminent-mortality");
  Rng rng(2);
  const auto cases = task_cases(cohort(), all_ids(), task, 60, rng);
  ASSERT_FALSE(cases.empty());
  int pos = 0;
  for (const auto& c : cases) {
    pos += c.positive ? 1 : 0;
    const auto& r = cohort()[c.patient];
    bool dies = false;
    for (const auto& e : r.state_events) {
      dies = dies || (e.kind == StateKind::Death && e.hour > c.t0 + 1 && e.hour <= c.t0 + 25);
    }
    EXPECT_EQ(c.positive, dies);
  }
  EXPECT_EQ(2 * pos, static_cast<int>(cases.size()));
}

TEST(Tasks, DiagnosisCasesEndTheStay) {
  const auto task = *find_task("hospital-discharge-diagnosis");
  Rng rng(3);
  for (const auto& c : task_cases(cohort(), all_ids(), task, 1000, rng)) {
    const auto& r = cohort()[c.patient];
    EXPECT_EQ(c.window_end, r.total_hours);
    EXPECT_EQ(c.t0, r.total_hours - 1);
    EXPECT_TRUE(label_at(r, r.total_hours).terminal());
  }
}

TEST(Tasks, OutcomeTextRoundTrips) {
  const auto mort = *find_task("icu-imminent-mortality");
  const auto diag = *find_task("ed-discharge-diagnosis");
  PatientRecord r;
  r.icd_categories = {"circulatory", "injury"};
  EXPECT_EQ(outcome_target(mort, r, {0, 0, 0, true}), "Outcome: yes\n");
  EXPECT_EQ(parse_outcome(outcome_target(mort, r, {0, 0, 0, false})).positive, false);
  EXPECT_EQ(*parse_outcome(outcome_target(diag, r, {})).icd, r.icd_categories);
  r.icd_categories.clear();
  EXPECT_TRUE(parse_outcome(outcome_target(diag, r, {})).icd->empty());
  EXPECT_FALSE(parse_outcome("Outcome: maybe\n").positive);
  EXPECT_THROW(outcome_target(*find_task("ed-vital-signs"), r, {}), std::invalid_argument);
}

TEST(Tasks, TruthPredictorScoresPerfectly) {
  Truth truth(cohort());
  const auto norm = NormStats::fit(cohort());
  const auto schema = schema_of(cohort());
  TaskOptions opts;
  opts.max_cases = 20;
  for (const char* name : {"ed-vital-signs", "hospital-medications", "icu-vital-signs"}) {
    const auto run = run_task(cohort(), all_ids(), *find_task(name), truth, norm, schema, opts);
    ASSERT_GT(run.report.cases, 0u) << name;
    EXPECT_DOUBLE_EQ(run.report.events.micro, 1.0) << name;
    if (run.report.mae.count()) EXPECT_DOUBLE_EQ(*run.report.mae.micro(), 0.0) << name;
  }
  for (const char* name : {"ed-admission", "icu-imminent-mortality", "icu-imminent-discharge"}) {
    const auto run = run_task(cohort(), all_ids(), *find_task(name), truth, norm, schema, opts);
    ASSERT_GT(run.report.cases, 0u) << name;
    EXPECT_DOUBLE_EQ(run.report.extra.at("accuracy"), 1.0) << name;
  }
  const auto diag = run_task(cohort(), all_ids(), *find_task("hospital-discharge-diagnosis"), truth, norm, schema, opts);
  EXPECT_DOUBLE_EQ(diag.report.extra.at("exact_match"), 1.0);
  EXPECT_DOUBLE_EQ(diag.report.events.micro, 1.0);
}

TEST(Tasks, FineTuningPools) {
  const auto task = *find_task("ed-admission");
  const auto pool = pathway_task_pool(cohort(), task);
  for (const auto& e : pool) {
    const auto iv = interval(cohort()[e.tp.patient], Unit::ED);
    EXPECT_GE(e.tp.t, iv->start);
    EXPECT_LT(e.tp.t, *iv->end);
    EXPECT_FALSE(e.target);
  }
  Rng rng(4);
  const auto outcome = outcome_task_pool(cohort(), task, 40, rng);
  ASSERT_FALSE(outcome.empty());
  for (const auto& e : outcome) EXPECT_TRUE(e.target->starts_with("Outcome: "));
}
