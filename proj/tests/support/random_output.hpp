#pragma once

#include <string>
#include <vector>

#include "ehrtraj/codec.hpp"
#include "ehrtraj/random.hpp"
#include "ehrtraj/timestep.hpp"

namespace ehrtraj::fixtures {

inline FeatureSchema random_schema(Rng& rng, int n_features) {
  static const char* const kCats[] = {"Vital Signs", "Lab Results", "Prescriptions", "Inputs"};
  static const char* const kStems[] = {"Heart Rate", "Rhythm",   "Aspirin", "Lactate", "pH",
                                       "O2 Flow",    "Sedation", "Note",    "x:y",     "A-1/2"};
  FeatureSchema schema;
  for (int i = 0; i < n_features; ++i) {
    const Unit unit = kAllUnits[static_cast<std::size_t>(uniform_int(rng, 0, 2))];
    const std::string cat = kCats[uniform_int(rng, 0, 3)];
    const std::string feat = std::string(kStems[uniform_int(rng, 0, 9)]) + " " + std::to_string(i);
    const auto kind = static_cast<FeatureKind>(uniform_int(rng, 0, 3));
    schema.emplace(FeatureKey{unit, cat, feat}, kind);
  }
  return schema;
}

inline std::string random_category_value(Rng& rng) {
  static const char* const kValues[] = {"Sinus", "AFib", "none", "82.0", "a: b", "x;y", "Normal sinus", "-"};
  return kValues[uniform_int(rng, 0, 7)];
}

/// A valid TimestepOutput whose features come from `schema`.
inline TimestepOutput random_output(Rng& rng, const FeatureSchema& schema) {
  TimestepOutput out;
  for (Unit u : kAllUnits) {
    if (bernoulli(rng, 0.3)) out.los[u] = static_cast<int>(uniform_int(rng, 0, 400));
  }
  for (StateKind k : kAllStateKinds) {
    if (bernoulli(rng, 0.12)) out.states.push_back(k);
  }
  for (const auto& [key, kind] : schema) {
    if (!bernoulli(rng, 0.35)) continue;
    switch (kind) {
      case FeatureKind::Event: out.events.insert(key); break;
      case FeatureKind::Numeric:
        out.values[key] = Decimal::from_hundredths(uniform_int(rng, -50000, 50000));
        break;
      case FeatureKind::Categorical: out.values[key] = random_category_value(rng); break;
      case FeatureKind::Binary: out.values[key] = bernoulli(rng, 0.5); break;
    }
  }
  if (out.terminal() && bernoulli(rng, 0.7)) {
    std::set<std::string> icd;
    for (int i = 0; i < 18; ++i) {
      if (bernoulli(rng, 0.15)) icd.insert("cat" + std::to_string(i));
    }
    out.icd = std::move(icd);
  }
  return out;
}

}  // namespace ehrtraj::fixtures
