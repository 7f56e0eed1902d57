#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ehrtraj/metrics.hpp"
#include "ehrtraj/sampling.hpp"
#include "ehrtraj/simulator.hpp"

namespace ehrtraj {

/// Empirical per-feature statistics of next-hour labels: presence frequency,
/// numeric mean and categorical mode.
struct FeatureStats {
  std::size_t labels = 0;
  std::map<FeatureKey, double> freq;
  std::map<FeatureKey, double> mean;
  std::map<FeatureKey, std::string> mode;  // categorical and binary ("true"/"false")
  FeatureSchema schema;

  static FeatureStats fit(const std::vector<PatientRecord>& train);
};

/// Difficulty floor: each feature is present with its empirical frequency,
/// carrying the mean or modal value. States and LOS are never predicted.
class StatisticBaseline : public StepPredictor {
 public:
  explicit StatisticBaseline(FeatureStats stats) : stats_(std::move(stats)) {}
  StepPrediction predict(const PatientRecord& record, int t, Rng& rng) override;
  TimestepOutput sample(Rng& rng) const;

 private:
  FeatureStats stats_;
};

struct ScoreOptions {
  MatchMode mode = MatchMode::MissingIsMaxError;
  int tol_hours = 1;
  UnknownFeaturePolicy unknown = UnknownFeaturePolicy::Skip;
};

/// Timestamped predictions and truths of one case, restricted by the caller
/// to the features and hours being scored.
struct CaseSeries {
  std::set<std::string> pred_features;
  std::set<std::string> true_features;
  std::map<std::string, std::vector<TimedValue<double>>> pred_numeric;   // normalised
  std::map<std::string, std::vector<TimedValue<double>>> true_numeric;   // normalised
  std::map<std::string, std::vector<TimedValue<std::string>>> pred_categorical;
  std::map<std::string, std::vector<TimedValue<std::string>>> true_categorical;

  void add(const TimestepOutput& out, int hour, bool is_prediction, const NormStats& norm,
           UnknownFeaturePolicy unknown, const std::function<bool(const FeatureKey&)>& keep = {});
};

/// Adds one case to the report; returns the case's own F1 and mean MAE for
/// bootstrapping.
struct CaseScores {
  double f1 = 1.0;
  std::optional<double> mae;
};
CaseScores score_case(const CaseSeries& c, const ScoreOptions& opts, F1Accumulator& f1, MetricReport& report);

struct NextStepOptions {
  std::size_t max_cases = 200;
  ScoreOptions score;
  std::size_t bootstrap_resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 1;
};

/// Next-hour prediction at uniformly drawn timepoints of the given patients.
/// Inputs never carry the true LOS.
MetricReport evaluate_next_step(const std::vector<PatientRecord>& cohort,
                                const std::vector<std::string>& patient_ids, StepPredictor& predictor,
                                const NormStats& norm, const FeatureSchema& schema, const NextStepOptions& opts);

}  // namespace ehrtraj
