#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ehrtraj/io.hpp"
#include "ehrtraj/random.hpp"
#include "ehrtraj/record.hpp"
#include "ehrtraj/timestep.hpp"

namespace ehrtraj {

/// Input snapshot at hour t of cohort[patient]; its label is hour t + 1.
struct TimePoint {
  std::size_t patient = 0;
  int t = 0;
  friend bool operator==(const TimePoint&, const TimePoint&) = default;
  friend auto operator<=>(const TimePoint&, const TimePoint&) = default;
};

/// Rarity weights over next-hour labels. A label with recorded features F
/// weighs (1 + sum_{f in F} log(1 + 1/freq(f))), multiplied by
/// transition_boost when the hour carries a state transition.
struct SampleWeightTable {
  std::map<std::string, double> event_freq;  // FeatureKey::to_string -> share of labels
  double transition_boost = 4.0;
  std::size_t n_train_labels = 0;

  /// Frequency of a feature key; unseen keys count as 1 / n_train_labels.
  double freq(const std::string& key) const;

  static SampleWeightTable build(const std::vector<PatientRecord>& train, double transition_boost = 4.0);
  Json to_json() const;
  static SampleWeightTable from_json(const Json& j);
};

double compute_weight(const TimestepOutput& label, const SampleWeightTable& table);

/// Every (patient, t) with a label, i.e. 0 <= t < total_hours.
std::vector<TimePoint> all_timepoints(const std::vector<PatientRecord>& cohort);

/// I.i.d. draws proportional to compute_weight of each timepoint's label.
std::vector<TimePoint> draw_samples(const std::vector<PatientRecord>& cohort,
                                    const SampleWeightTable& table, std::size_t count, Rng& rng);

struct SplitFractions {
  double train = 0.95;
  double val = 0.025;
  double test = 0.025;
};

struct PatientSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Patient-level split after a seeded shuffle. Sizes use largest-remainder
/// rounding of n * fraction; ties go to val, then test, then train.
PatientSplit fixed_eval_split(const std::vector<std::string>& patient_ids,
                              const SplitFractions& fractions, Rng& rng);

/// Uniform draw without replacement from the timepoints of the given
/// patients; returns all of them when count exceeds the pool.
std::vector<TimePoint> eval_timepoints(const std::vector<PatientRecord>& cohort,
                                       const std::vector<std::string>& patient_ids,
                                       std::size_t count, Rng& rng);

std::vector<PatientRecord> select_patients(const std::vector<PatientRecord>& cohort,
                                           const std::vector<std::string>& patient_ids);

}  // namespace ehrtraj
