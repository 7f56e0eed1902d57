#pragma once

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ehrtraj/decimal.hpp"

namespace ehrtraj {

class RecordError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Unit : std::uint8_t { ED = 0, Hospital = 1, ICU = 2 };
inline constexpr std::array<Unit, 3> kAllUnits = {Unit::ED, Unit::Hospital, Unit::ICU};

std::string_view unit_name(Unit unit);
std::optional<Unit> parse_unit(std::string_view name);

enum class FeatureKind : std::uint8_t { Event, Numeric, Categorical, Binary };

std::string_view kind_name(FeatureKind kind);
std::optional<FeatureKind> parse_kind(std::string_view name);

/// monostate for events, Decimal for numeric, string for categorical, bool for
/// binary features.
using FeatureValue = std::variant<std::monostate, Decimal, std::string, bool>;

bool value_matches(FeatureKind kind, const FeatureValue& value);

struct SeriesEntry {
  int hour = 0;
  FeatureValue value;
  friend bool operator==(const SeriesEntry&, const SeriesEntry&) = default;
};

struct FeatureSeries {
  FeatureKind kind = FeatureKind::Event;
  std::vector<SeriesEntry> entries;  // strictly ascending by hour

  const SeriesEntry* at(int hour) const;
  friend bool operator==(const FeatureSeries&, const FeatureSeries&) = default;
};

struct CategoryData {
  std::map<std::string, FeatureSeries> features;
  friend bool operator==(const CategoryData&, const CategoryData&) = default;
};

struct UnitData {
  std::map<std::string, CategoryData> categories;
  std::optional<int> los_remaining;
  friend bool operator==(const UnitData&, const UnitData&) = default;
};

enum class StateKind : std::uint8_t {
  EDDischarge,
  HospAdmit,
  HospDischarge,
  ICUAdmit,
  ICUDischarge,
  Death,
};
inline constexpr std::array<StateKind, 6> kAllStateKinds = {
    StateKind::EDDischarge, StateKind::HospAdmit,    StateKind::HospDischarge,
    StateKind::ICUAdmit,    StateKind::ICUDischarge, StateKind::Death};

std::string_view state_name(StateKind kind);
std::optional<StateKind> parse_state(std::string_view name);

struct StateEvent {
  int hour = 0;
  StateKind kind = StateKind::EDDischarge;
  friend bool operator==(const StateEvent&, const StateEvent&) = default;
};

/// A stay ends at an hour carrying death, hospital discharge, or an ED
/// discharge that is not paired with a hospital admission.
bool is_stay_terminal(std::span<const StateKind> states);

struct FeatureKey {
  Unit unit = Unit::ED;
  std::string category;
  std::string feature;

  friend auto operator<=>(const FeatureKey&, const FeatureKey&) = default;
  friend bool operator==(const FeatureKey&, const FeatureKey&) = default;
  /// "ED|Vital Signs|Heart Rate"; used for report keys only.
  std::string to_string() const;
};

struct PatientRecord {
  std::string patient_id;
  std::map<std::string, std::string> static_info;
  std::map<Unit, UnitData> units;
  int total_hours = 0;
  std::vector<StateEvent> state_events;  // ascending by hour
  std::set<std::string> icd_categories;

  const FeatureSeries* find(const FeatureKey& key) const;
  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

/// Pre-aggregation input row. Timestamps are fractional hours since arrival.
using RawValue = std::variant<std::monostate, double, std::string, bool>;

struct RawObservation {
  Unit unit = Unit::ED;
  std::string category;
  std::string feature;
  FeatureKind kind = FeatureKind::Event;
  double timestamp = 0.0;
  RawValue value;
};

/// Names must be non-empty single-line strings without surrounding spaces and
/// without the ": " / ", " separators of the text format.
bool is_valid_name(std::string_view name);
bool is_valid_categorical(std::string_view value);

struct TimestepOutput;

/// Hourly aggregation: numeric values are averaged, categorical and binary
/// values take the mode (ties broken lexicographically), events are present
/// if observed at least once. Sub-hour timestamps floor to their hour.
PatientRecord aggregate_hourly(std::span<const RawObservation> observations,
                               std::string patient_id = {});

/// Flattens a record's series back into one observation per entry.
std::vector<RawObservation> to_observations(const PatientRecord& record);

/// Record truncated at hour t (entries and state events with hour <= t).
PatientRecord snapshot(const PatientRecord& record, int t);

/// Everything recorded at hour t. The training label for an input at t is
/// label_at(record, t + 1).
TimestepOutput label_at(const PatientRecord& record, int t);

struct UnitInterval {
  Unit unit = Unit::ED;
  int start = 0;
  std::optional<int> end;  // inclusive; absent while the stay is open
};

std::vector<UnitInterval> unit_intervals(const PatientRecord& record);

/// Remaining hours per unit active at t, for units whose end is recorded.
std::map<Unit, int> true_los(const PatientRecord& record, int t);

/// Units whose interval covers hour t (ends inclusive).
std::set<Unit> active_units(const PatientRecord& record, int t);

/// Throws RecordError describing the first violated invariant.
void validate(const PatientRecord& record);

}  // namespace ehrtraj
