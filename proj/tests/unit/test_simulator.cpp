#include <gtest/gtest.h>

#include "ehrtraj/simulator.hpp"
#include "tiny.hpp"

using namespace ehrtraj;

namespace {

const FeatureKey kHr{Unit::ED, "Vital Signs", "Heart Rate"};

// Replays scripted outputs, one per call.
class Scripted : public StepPredictor {
 public:
  explicit Scripted(std::vector<std::string> texts) : texts_(std::move(texts)) {}
  StepPrediction predict(const PatientRecord&, int, Rng&) override {
    const auto& t = texts_[std::min(calls_, texts_.size() - 1)];
    ++calls_;
    return {t, {}};
  }
  std::size_t calls() const { return calls_; }

 private:
  std::vector<std::string> texts_;
  std::size_t calls_ = 0;
};

std::string hr_output(double v) {
  TimestepOutput o;
  o.values[kHr] = Decimal::from_double(v);
  return render_output(o);
}

std::string discharge_output() {
  TimestepOutput o;
  o.states = {StateKind::EDDischarge};
  o.icd = std::set<std::string>{};
  return render_output(o);
}

SimConfig sim_config(const std::vector<PatientRecord>& cohort, int steps) {
  SimConfig c;
  c.max_steps = steps;
  c.schema = schema_of(cohort);
  return c;
}

}  // namespace

TEST(Simulate, TerminalOutputConvergesInOneStep) {
  const auto cohort = generate_cohort(fixtures::tiny_cohort(2, 1, 5, 6));
  Scripted p({discharge_output()});
  Rng rng(1);
  const auto traj = simulate(cohort[0], 1, p, sim_config(cohort, 10), rng);
  ASSERT_EQ(traj.steps.size(), 1u);
  EXPECT_EQ(traj.terminal, Terminal::Converged);
  EXPECT_EQ(traj.terminal_kind, StateKind::EDDischarge);
  EXPECT_EQ(traj.steps[0].hour, 2);
  EXPECT_EQ(traj.record.total_hours, 2);
}

TEST(Simulate, NeverTerminalHitsStepCap) {
  const auto cohort = generate_cohort(fixtures::tiny_cohort(2, 1, 5, 6));
  Scripted p({hr_output(81)});
  Rng rng(1);
  const auto traj = simulate(cohort[0], 0, p, sim_config(cohort, 7), rng);
  EXPECT_EQ(traj.terminal, Terminal::StepCap);
  EXPECT_EQ(traj.steps.size(), 7u);
  EXPECT_EQ(traj.record.total_hours, 7);
  for (int h = 1; h <= 7; ++h) EXPECT_EQ(label_at(traj.record, h).values.at(kHr), FeatureValue(Decimal::from_double(81)));
}

TEST(Simulate, HistoryBeforeStartIsUntouched) {
  const auto cohort = generate_cohort(fixtures::tiny_cohort(2, 4, 6, 8));
  Scripted p({hr_output(70)});
  Rng rng(1);
  const int t0 = 4;
  const auto traj = simulate(cohort[1], t0, p, sim_config(cohort, 3), rng);
  EXPECT_EQ(snapshot(traj.record, t0), inference_view(cohort[1], t0));
}

TEST(Simulate, RetriesThenGivesUp) {
  const auto cohort = generate_cohort(fixtures::tiny_cohort(1, 1));
  Scripted bad({"???"});
  Rng rng(1);
  auto cfg = sim_config(cohort, 5);
  cfg.retries = 2;
  const auto traj = simulate(cohort[0], 0, bad, cfg, rng);
  EXPECT_EQ(traj.terminal, Terminal::ParseFailure);
  EXPECT_EQ(bad.calls(), 3u);
  ASSERT_EQ(traj.steps.size(), 1u);
  EXPECT_EQ(traj.steps[0].attempts, 3);
  EXPECT_FALSE(traj.steps[0].diagnostics.empty());

  Scripted recovers({"???", hr_output(90), discharge_output()});
  const auto ok = simulate(cohort[0], 0, recovers, cfg, rng);
  EXPECT_EQ(ok.terminal, Terminal::Converged);
  EXPECT_EQ(ok.steps[0].attempts, 2);
}

TEST(Simulate, StopOnSelectsStates) {
  const auto cohort = generate_cohort(fixtures::tiny_cohort(1, 1));
  TimestepOutput admit;
  admit.states = {StateKind::EDDischarge, StateKind::HospAdmit};
  Rng rng(1);
  // Admission is not the end of the stay, so by default the rollout continues.
  Scripted a({render_output(admit), hr_output(75)});
  const auto cont = simulate(cohort[0], 0, a, sim_config(cohort, 3), rng);
  EXPECT_EQ(cont.terminal, Terminal::StepCap);
  EXPECT_EQ(cont.steps.size(), 3u);

  Scripted b({hr_output(75), render_output(admit)});
  auto cfg = sim_config(cohort, 5);
  cfg.stop_on = {StateKind::HospAdmit};
  const auto stop = simulate(cohort[0], 0, b, cfg, rng);
  EXPECT_EQ(stop.terminal, Terminal::Converged);
  EXPECT_EQ(stop.terminal_kind, StateKind::HospAdmit);
  EXPECT_EQ(stop.steps.size(), 2u);
}

TEST(Simulate, ModelRolloutIsDeterministicPerSeed) {
  const auto cohort = generate_cohort(fixtures::tiny_cohort(3, 2));
  const Vocab vocab = corpus_vocab(cohort);
  Rng init(3);
  PathwayConfig pc;
  PathwayModel model(make_net(fixtures::tiny_net(vocab.size()), init), vocab, pc);
  ModelPredictor p(model, nullptr, DecodeConfig{1.0, 0, 1.0, 24});
  auto cfg = sim_config(cohort, 3);
  Rng a(42), b(42);
  const auto ta = simulate(cohort[0], 1, p, cfg, a);
  const auto tb = simulate(cohort[0], 1, p, cfg, b);
  EXPECT_EQ(ta.to_json(), tb.to_json());
  EXPECT_GT(ta.first_counts.input_tokens, 0u);
}
