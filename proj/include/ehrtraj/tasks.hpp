#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ehrtraj/evaluation.hpp"
#include "ehrtraj/simulator.hpp"
#include "ehrtraj/training.hpp"

namespace ehrtraj {

enum class TaskKind {
  Forecast,   // features of one category over the output window
  Admission,  // ED stay ends in hospital admission
  Diagnosis,  // ICD categories at the end of the stay
  Mortality,  // death within the window
  Discharge,  // unit discharge within the window
};

/// One row of the task table. Rolling tasks start at a random hour of the
/// unit; after `gap_hours` the next `window_hours` are scored (cut at the
/// unit's end). Static tasks start at a fixed anchor.
struct TaskSpec {
  std::string name;
  std::string title;
  Unit unit = Unit::ED;
  TaskKind kind = TaskKind::Forecast;
  std::string category;  // Forecast only
  int gap_hours = 1;
  int window_hours = 24;
};

const std::vector<TaskSpec>& task_catalog();
std::optional<TaskSpec> find_task(std::string_view name);
std::vector<std::string> task_names();

struct TaskCase {
  std::size_t patient = 0;
  int t0 = 0;
  int window_end = 0;  // last scored hour
  bool positive = false;
};

/// Eligible cases of the given patients. Binary outcome tasks are balanced by
/// drawing equally many positive and negative cases.
std::vector<TaskCase> task_cases(const std::vector<PatientRecord>& cohort,
                                 const std::vector<std::string>& patient_ids, const TaskSpec& task,
                                 std::size_t max_cases, Rng& rng);

/// Text a model fine-tuned for the outcome answers with: "Outcome: yes" /
/// "Outcome: no", or the ICD line for diagnosis tasks.
std::string outcome_target(const TaskSpec& task, const PatientRecord& record, const TaskCase& c);

struct OutcomeAnswer {
  std::optional<bool> positive;
  std::optional<std::set<std::string>> icd;
};
OutcomeAnswer parse_outcome(std::string_view text);

/// Training pools for fine-tuning: next-hour examples at the task's unit
/// hours (pathway mode) or single-step outcome targets (outcome mode).
std::vector<PathwayExample> pathway_task_pool(const std::vector<PatientRecord>& cohort, const TaskSpec& task);
std::vector<PathwayExample> outcome_task_pool(const std::vector<PatientRecord>& cohort, const TaskSpec& task,
                                              std::size_t max_cases, Rng& rng);

struct TaskOptions {
  std::size_t max_cases = 100;
  ScoreOptions score{MatchMode::MatchedOnly, 1, UnknownFeaturePolicy::Skip};
  /// Step cap of the ED admission rollout; 0 derives it from the longest ED
  /// stay among the evaluated patients.
  int admission_step_cap = 0;
  int retries = 3;
  /// The predictor answers the outcome directly in one step.
  bool direct_outcome = false;
  std::size_t bootstrap_resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 1;
};

struct TaskRun {
  MetricReport report;
  std::vector<Trajectory> trajectories;
};

TaskRun run_task(const std::vector<PatientRecord>& cohort, const std::vector<std::string>& patient_ids,
                 const TaskSpec& task, StepPredictor& predictor, const NormStats& norm,
                 const FeatureSchema& schema, const TaskOptions& opts);

}  // namespace ehrtraj
