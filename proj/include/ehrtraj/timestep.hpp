#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ehrtraj/record.hpp"

namespace ehrtraj {

/// Sparse content of one hour: LOS per unit, state transitions, recorded
/// features and, at the end of a stay, the ICD categories.
struct TimestepOutput {
  std::map<Unit, int> los;
  std::vector<StateKind> states;  // sorted, unique
  std::set<FeatureKey> events;
  std::map<FeatureKey, FeatureValue> values;
  std::optional<std::set<std::string>> icd;

  bool empty() const {
    return los.empty() && states.empty() && events.empty() && values.empty() && !icd;
  }
  bool has_state(StateKind kind) const;
  bool terminal() const { return is_stay_terminal(states); }
  /// Keys of every recorded feature, events and values together.
  std::set<FeatureKey> recorded_features() const;

  friend bool operator==(const TimestepOutput&, const TimestepOutput&) = default;
};

/// Throws std::invalid_argument if the output violates its invariants.
void check_output(const TimestepOutput& out);

}  // namespace ehrtraj
