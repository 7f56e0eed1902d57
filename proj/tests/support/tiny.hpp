#pragma once

#include "ehrtraj/synth.hpp"
#include "ehrtraj/training.hpp"

namespace ehrtraj::fixtures {

// ED-only cohort with one numeric, one categorical and one event feature.
inline CohortConfig tiny_cohort(std::size_t n, std::uint64_t seed, int los_min = 2, int los_max = 4) {
  CohortConfig c = CohortConfig::defaults();
  c.n_patients = n;
  c.seed = seed;
  c.p_hospital_admit = 0.0;
  c.units[Unit::ED] = {los_min, los_max, 0.0};
  c.features.clear();
  FeatureSpec hr;
  hr.unit = Unit::ED;
  hr.category = "Vital Signs";
  hr.name = "Heart Rate";
  hr.mean = 80;
  hr.patient_sd = 5;
  c.features.push_back(hr);
  FeatureSpec rhythm;
  rhythm.unit = Unit::ED;
  rhythm.category = "Vital Signs";
  rhythm.name = "Rhythm";
  rhythm.kind = FeatureKind::Categorical;
  rhythm.values = {"sinus", "afib"};
  c.features.push_back(rhythm);
  FeatureSpec med;
  med.unit = Unit::ED;
  med.category = "Prescriptions";
  med.name = "Aspirin";
  med.kind = FeatureKind::Event;
  med.on_prob = 0.3;
  c.features.push_back(med);
  return c;
}

inline nn::TransformerConfig tiny_net(int vocab_size, int max_seq = 256) {
  return {vocab_size, max_seq, 1, 2, 16, 32};
}

}  // namespace ehrtraj::fixtures
