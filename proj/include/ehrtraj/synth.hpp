#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ehrtraj/io.hpp"
#include "ehrtraj/random.hpp"
#include "ehrtraj/record.hpp"

namespace ehrtraj {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One catalog entry. Which fields matter depends on `kind`:
/// numeric uses mean/patient_sd/coeff/noise/decimals/min/max, categorical uses
/// values/switch_prob, binary and event use on_prob/off_prob. Every kind is
/// recorded every `period` hours from a per-patient phase, skipped with
/// probability `missing`; events and binaries only while switched on.
struct FeatureSpec {
  Unit unit = Unit::ED;
  std::string category;
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
  int period = 1;
  double missing = 0.0;
  // numeric
  double mean = 0.0;
  double patient_sd = 0.0;
  double coeff = 0.9;
  double noise = 1.0;
  int decimals = 0;
  std::optional<double> min;
  std::optional<double> max;
  // categorical
  std::vector<std::string> values;
  double switch_prob = 0.05;
  // event / binary
  double on_prob = 0.05;
  double off_prob = 0.3;
  std::optional<std::string> icd;  // ICD label suggested by this event
};

struct UnitSpec {
  int los_min = 1;
  int los_max = 1;
  double death_hazard = 0.0;
  /// 0 draws the stay uniformly from the range. Otherwise each hour past
  /// los_min ends the stay with this probability, truncated at los_max.
  double discharge_hazard = 0.0;
};

struct CohortConfig {
  std::size_t n_patients = 100;
  std::uint64_t seed = 1;
  int age_min = 18;
  int age_max = 90;
  std::map<Unit, UnitSpec> units;
  double p_hospital_admit = 0.5;
  double icu_hazard = 0.02;  // per hospital hour, at most one ICU visit
  std::vector<std::string> icd_labels;
  double icd_base_rate = 0.02;
  double icd_link_prob = 0.8;
  std::vector<FeatureSpec> features;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  Json to_json() const;
  /// Starts from the defaults and overrides only the keys present; unknown
  /// keys are rejected.
  static CohortConfig from_json(const Json& j);
  static CohortConfig defaults();
};

std::vector<std::string> default_icd_labels();
std::vector<FeatureSpec> default_catalog();

PatientRecord generate_patient(const CohortConfig& cfg, Rng& rng, std::string patient_id);

/// Patient i draws from child_rng(cfg.seed, i), so cohorts are reproducible
/// and independent of generation order.
std::vector<PatientRecord> generate_cohort(const CohortConfig& cfg);

}  // namespace ehrtraj
