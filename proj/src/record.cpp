#include "ehrtraj/record.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "ehrtraj/timestep.hpp"

namespace ehrtraj {

std::string_view unit_name(Unit unit) {
  switch (unit) {
    case Unit::ED: return "ED";
    case Unit::Hospital: return "Hospital";
    case Unit::ICU: return "ICU";
  }
  return "?";
}

std::optional<Unit> parse_unit(std::string_view name) {
  for (Unit u : kAllUnits) {
    if (unit_name(u) == name) return u;
  }
  return std::nullopt;
}

std::string_view kind_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::Event: return "event";
    case FeatureKind::Numeric: return "numeric";
    case FeatureKind::Categorical: return "categorical";
    case FeatureKind::Binary: return "binary";
  }
  return "?";
}

std::optional<FeatureKind> parse_kind(std::string_view name) {
  for (FeatureKind k : {FeatureKind::Event, FeatureKind::Numeric, FeatureKind::Categorical,
                        FeatureKind::Binary}) {
    if (kind_name(k) == name) return k;
  }
  return std::nullopt;
}

bool value_matches(FeatureKind kind, const FeatureValue& value) {
  switch (kind) {
    case FeatureKind::Event: return std::holds_alternative<std::monostate>(value);
    case FeatureKind::Numeric: return std::holds_alternative<Decimal>(value);
    case FeatureKind::Categorical: return std::holds_alternative<std::string>(value);
    case FeatureKind::Binary: return std::holds_alternative<bool>(value);
  }
  return false;
}

const SeriesEntry* FeatureSeries::at(int hour) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), hour,
                             [](const SeriesEntry& e, int h) { return e.hour < h; });
  if (it == entries.end() || it->hour != hour) return nullptr;
  return &*it;
}

std::string_view state_name(StateKind kind) {
  switch (kind) {
    case StateKind::EDDischarge: return "ED_discharge";
    case StateKind::HospAdmit: return "Hosp_admit";
    case StateKind::HospDischarge: return "Hosp_discharge";
    case StateKind::ICUAdmit: return "ICU_admit";
    case StateKind::ICUDischarge: return "ICU_discharge";
    case StateKind::Death: return "Death";
  }
  return "?";
}

std::optional<StateKind> parse_state(std::string_view name) {
  for (StateKind k : kAllStateKinds) {
    if (state_name(k) == name) return k;
  }
  return std::nullopt;
}

bool is_stay_terminal(std::span<const StateKind> states) {
  bool ed_discharge = false;
  bool hosp_admit = false;
  for (StateKind k : states) {
    if (k == StateKind::Death || k == StateKind::HospDischarge) return true;
    ed_discharge |= k == StateKind::EDDischarge;
    hosp_admit |= k == StateKind::HospAdmit;
  }
  return ed_discharge && !hosp_admit;
}

std::string FeatureKey::to_string() const {
  std::string out(unit_name(unit));
  out += '|';
  out += category;
  out += '|';
  out += feature;
  return out;
}

const FeatureSeries* PatientRecord::find(const FeatureKey& key) const {
  auto u = units.find(key.unit);
  if (u == units.end()) return nullptr;
  auto c = u->second.categories.find(key.category);
  if (c == u->second.categories.end()) return nullptr;
  auto f = c->second.features.find(key.feature);
  if (f == c->second.features.end()) return nullptr;
  return &f->second;
}

bool is_valid_name(std::string_view name) {
  if (name.empty()) return false;
  if (name.front() == ' ' || name.back() == ' ') return false;
  if (name.starts_with("- ")) return false;
  if (name.back() == ':') return false;
  for (char c : name) {
    if (c == '\n' || c == '\r' || c == '\t') return false;
  }
  return name.find(": ") == std::string_view::npos && name.find(", ") == std::string_view::npos;
}

bool is_valid_categorical(std::string_view value) {
  if (value.empty()) return false;
  if (value.front() == ' ' || value.back() == ' ') return false;
  for (char c : value) {
    if (c == '\n' || c == '\r' || c == '\t') return false;
  }
  return value.find(", ") == std::string_view::npos;
}

namespace {

FeatureValue aggregate_bucket(FeatureKind kind, std::vector<RawValue>& values) {
  switch (kind) {
    case FeatureKind::Event:
      return std::monostate{};
    case FeatureKind::Numeric: {
      std::vector<double> nums;
      nums.reserve(values.size());
      for (const auto& v : values) nums.push_back(std::get<double>(v));
      // Summing in sorted order keeps the mean independent of input order.
      std::sort(nums.begin(), nums.end());
      long double sum = 0;
      for (double x : nums) sum += x;
      return Decimal::from_double(static_cast<double>(sum / static_cast<long double>(nums.size())));
    }
    case FeatureKind::Categorical: {
      std::map<std::string, int> counts;
      for (const auto& v : values) ++counts[std::get<std::string>(v)];
      // std::map iterates lexicographically, so the first maximum wins ties.
      auto best = counts.begin();
      for (auto it = counts.begin(); it != counts.end(); ++it) {
        if (it->second > best->second) best = it;
      }
      return best->first;
    }
    case FeatureKind::Binary: {
      int yes = 0;
      int no = 0;
      for (const auto& v : values) (std::get<bool>(v) ? yes : no)++;
      // "no" sorts before "yes".
      return yes > no;
    }
  }
  return std::monostate{};
}

bool raw_matches(FeatureKind kind, const RawValue& value) {
  switch (kind) {
    case FeatureKind::Event: return std::holds_alternative<std::monostate>(value);
    case FeatureKind::Numeric:
      return std::holds_alternative<double>(value) && std::isfinite(std::get<double>(value));
    case FeatureKind::Categorical: return std::holds_alternative<std::string>(value);
    case FeatureKind::Binary: return std::holds_alternative<bool>(value);
  }
  return false;
}

}  // namespace

PatientRecord aggregate_hourly(std::span<const RawObservation> observations,
                               std::string patient_id) {
  struct Bucketed {
    FeatureKind kind;
    std::map<int, std::vector<RawValue>> hours;
  };
  std::map<FeatureKey, Bucketed> grouped;
  int max_hour = 0;
  for (const auto& obs : observations) {
    FeatureKey key{obs.unit, obs.category, obs.feature};
    if (!(obs.timestamp >= 0.0)) {
      throw RecordError("negative or invalid timestamp for feature '" + obs.feature + "'");
    }
    if (!raw_matches(obs.kind, obs.value)) {
      throw RecordError("value does not match kind '" + std::string(kind_name(obs.kind)) +
                        "' for feature '" + obs.feature + "'");
    }
    auto [it, inserted] = grouped.try_emplace(key, Bucketed{obs.kind, {}});
    if (!inserted && it->second.kind != obs.kind) {
      throw RecordError("kind mismatch for feature '" + obs.feature + "': " +
                        std::string(kind_name(it->second.kind)) + " vs " +
                        std::string(kind_name(obs.kind)));
    }
    const int hour = static_cast<int>(std::floor(obs.timestamp));
    max_hour = std::max(max_hour, hour);
    it->second.hours[hour].push_back(obs.value);
  }

  PatientRecord record;
  record.patient_id = std::move(patient_id);
  record.total_hours = max_hour;
  for (auto& [key, bucketed] : grouped) {
    FeatureSeries series;
    series.kind = bucketed.kind;
    for (auto& [hour, values] : bucketed.hours) {
      series.entries.push_back({hour, aggregate_bucket(bucketed.kind, values)});
    }
    record.units[key.unit].categories[key.category].features[key.feature] = std::move(series);
  }
  return record;
}

std::vector<RawObservation> to_observations(const PatientRecord& record) {
  std::vector<RawObservation> out;
  for (const auto& [unit, ud] : record.units) {
    for (const auto& [cat, cd] : ud.categories) {
      for (const auto& [feat, series] : cd.features) {
        for (const auto& e : series.entries) {
          RawObservation obs{unit, cat, feat, series.kind, static_cast<double>(e.hour), {}};
          std::visit(
              [&](const auto& v) {
                using V = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<V, Decimal>) {
                  obs.value = v.to_double();
                } else {
                  obs.value = v;
                }
              },
              e.value);
          out.push_back(std::move(obs));
        }
      }
    }
  }
  return out;
}

PatientRecord snapshot(const PatientRecord& record, int t) {
  if (t < 0 || t > record.total_hours) {
    throw std::out_of_range("snapshot hour " + std::to_string(t) + " outside [0, " +
                            std::to_string(record.total_hours) + "]");
  }
  PatientRecord out;
  out.patient_id = record.patient_id;
  out.static_info = record.static_info;
  out.total_hours = t;
  for (const auto& [unit, ud] : record.units) {
    UnitData& dst = out.units[unit];
    dst.los_remaining = ud.los_remaining;
    for (const auto& [cat, cd] : ud.categories) {
      CategoryData kept;
      for (const auto& [feat, series] : cd.features) {
        FeatureSeries s{series.kind, {}};
        for (const auto& e : series.entries) {
          if (e.hour > t) break;
          s.entries.push_back(e);
        }
        if (!s.entries.empty()) kept.features.emplace(feat, std::move(s));
      }
      if (!kept.features.empty()) dst.categories.emplace(cat, std::move(kept));
    }
  }
  for (const auto& ev : record.state_events) {
    if (ev.hour <= t) out.state_events.push_back(ev);
  }
  if (t == record.total_hours) out.icd_categories = record.icd_categories;
  return out;
}

std::vector<UnitInterval> unit_intervals(const PatientRecord& record) {
  std::vector<UnitInterval> intervals;
  std::optional<UnitInterval> open[3];
  auto slot = [](Unit u) { return static_cast<int>(u); };
  auto close = [&](Unit u, int hour) {
    auto& o = open[slot(u)];
    if (o) {
      o->end = hour;
      intervals.push_back(*o);
      o.reset();
    }
  };

  const bool has_admit = std::any_of(record.state_events.begin(), record.state_events.end(),
                                     [](const StateEvent& e) {
                                       return e.kind == StateKind::HospAdmit;
                                     });
  const bool has_ed_discharge =
      std::any_of(record.state_events.begin(), record.state_events.end(),
                  [](const StateEvent& e) { return e.kind == StateKind::EDDischarge; });
  if (record.units.contains(Unit::ED) || has_ed_discharge) open[slot(Unit::ED)] = UnitInterval{Unit::ED, 0, {}};
  if (record.units.contains(Unit::Hospital) && !has_admit) {
    open[slot(Unit::Hospital)] = UnitInterval{Unit::Hospital, 0, {}};
  }

  for (const auto& ev : record.state_events) {
    switch (ev.kind) {
      case StateKind::EDDischarge: close(Unit::ED, ev.hour); break;
      case StateKind::HospAdmit:
        if (!open[slot(Unit::Hospital)]) open[slot(Unit::Hospital)] = UnitInterval{Unit::Hospital, ev.hour, {}};
        break;
      case StateKind::HospDischarge: close(Unit::Hospital, ev.hour); break;
      case StateKind::ICUAdmit:
        if (!open[slot(Unit::ICU)]) open[slot(Unit::ICU)] = UnitInterval{Unit::ICU, ev.hour, {}};
        break;
      case StateKind::ICUDischarge: close(Unit::ICU, ev.hour); break;
      case StateKind::Death:
        for (Unit u : kAllUnits) close(u, ev.hour);
        break;
    }
  }
  for (Unit u : kAllUnits) {
    if (open[slot(u)]) intervals.push_back(*open[slot(u)]);
  }
  std::stable_sort(intervals.begin(), intervals.end(), [](const UnitInterval& a, const UnitInterval& b) {
    return a.start != b.start ? a.start < b.start : a.unit < b.unit;
  });
  return intervals;
}

std::map<Unit, int> true_los(const PatientRecord& record, int t) {
  std::map<Unit, int> los;
  for (const auto& iv : unit_intervals(record)) {
    if (iv.start <= t && iv.end && t <= *iv.end) los[iv.unit] = *iv.end - t;
  }
  return los;
}

std::set<Unit> active_units(const PatientRecord& record, int t) {
  std::set<Unit> out;
  for (const auto& iv : unit_intervals(record)) {
    if (iv.start <= t && (!iv.end || t <= *iv.end)) out.insert(iv.unit);
  }
  return out;
}

TimestepOutput label_at(const PatientRecord& record, int t) {
  if (t < 1 || t > record.total_hours) {
    throw std::out_of_range("label hour " + std::to_string(t) + " outside [1, " +
                            std::to_string(record.total_hours) + "]");
  }
  TimestepOutput out;
  for (const auto& [unit, ud] : record.units) {
    for (const auto& [cat, cd] : ud.categories) {
      for (const auto& [feat, series] : cd.features) {
        const SeriesEntry* e = series.at(t);
        if (!e) continue;
        FeatureKey key{unit, cat, feat};
        if (series.kind == FeatureKind::Event) {
          out.events.insert(std::move(key));
        } else {
          out.values.emplace(std::move(key), e->value);
        }
      }
    }
  }
  for (const auto& ev : record.state_events) {
    if (ev.hour == t) out.states.push_back(ev.kind);
  }
  std::sort(out.states.begin(), out.states.end());
  out.states.erase(std::unique(out.states.begin(), out.states.end()), out.states.end());
  out.los = true_los(record, t);
  if (t == record.total_hours && out.terminal()) out.icd = record.icd_categories;
  return out;
}

void validate(const PatientRecord& record) {
  auto fail = [&](const std::string& what) {
    throw RecordError("record '" + record.patient_id + "': " + what);
  };
  if (record.total_hours < 0) fail("negative total_hours");
  for (const auto& [key, value] : record.static_info) {
    if (!is_valid_name(key)) fail("invalid static attribute name '" + key + "'");
    if (!is_valid_categorical(value)) fail("invalid static value for '" + key + "'");
  }
  for (const auto& [unit, ud] : record.units) {
    if (ud.los_remaining && *ud.los_remaining < 0) fail("negative LOS");
    for (const auto& [cat, cd] : ud.categories) {
      if (!is_valid_name(cat)) fail("invalid category name '" + cat + "'");
      for (const auto& [feat, series] : cd.features) {
        if (!is_valid_name(feat)) fail("invalid feature name '" + feat + "'");
        int prev = -1;
        for (const auto& e : series.entries) {
          if (e.hour <= prev) fail("entries of '" + feat + "' not strictly ascending");
          if (e.hour < 0 || e.hour > record.total_hours) {
            fail("entry of '" + feat + "' at hour " + std::to_string(e.hour) + " outside stay");
          }
          if (!value_matches(series.kind, e.value)) fail("value kind mismatch in '" + feat + "'");
          if (auto* s = std::get_if<std::string>(&e.value); s && !is_valid_categorical(*s)) {
            fail("invalid categorical value in '" + feat + "'");
          }
          prev = e.hour;
        }
      }
    }
  }
  int prev = -1;
  int deaths = 0;
  for (const auto& ev : record.state_events) {
    if (ev.hour < prev) fail("state events not sorted");
    if (ev.hour < 0 || ev.hour > record.total_hours) fail("state event outside stay");
    prev = ev.hour;
    if (ev.kind == StateKind::Death) ++deaths;
  }
  if (deaths > 1) fail("more than one death event");
  if (deaths == 1 && record.state_events.back().kind != StateKind::Death) {
    fail("death is not the final state event");
  }
  if (!record.icd_categories.empty()) {
    std::vector<StateKind> final_states;
    for (const auto& ev : record.state_events) {
      if (ev.hour == record.total_hours) final_states.push_back(ev.kind);
    }
    if (!is_stay_terminal(final_states)) fail("ICD categories on a non-terminal record");
    for (const auto& c : record.icd_categories) {
      if (!is_valid_categorical(c) || c.find(';') != std::string::npos || c == "none") {
        fail("invalid ICD category '" + c + "'");
      }
    }
  }
}

bool TimestepOutput::has_state(StateKind kind) const {
  return std::find(states.begin(), states.end(), kind) != states.end();
}

std::set<FeatureKey> TimestepOutput::recorded_features() const {
  std::set<FeatureKey> out = events;
  for (const auto& [k, v] : values) out.insert(k);
  return out;
}

void check_output(const TimestepOutput& out) {
  for (const auto& [u, h] : out.los) {
    if (h < 0) throw std::invalid_argument("negative LOS");
  }
  if (!std::is_sorted(out.states.begin(), out.states.end()) ||
      std::adjacent_find(out.states.begin(), out.states.end()) != out.states.end()) {
    throw std::invalid_argument("states must be sorted and unique");
  }
  for (const auto& k : out.events) {
    if (out.values.contains(k)) throw std::invalid_argument("feature both event and value: " + k.to_string());
    if (!is_valid_name(k.category) || !is_valid_name(k.feature)) {
      throw std::invalid_argument("invalid name: " + k.to_string());
    }
  }
  for (const auto& [k, v] : out.values) {
    if (std::holds_alternative<std::monostate>(v)) {
      throw std::invalid_argument("value entry without payload: " + k.to_string());
    }
    if (!is_valid_name(k.category) || !is_valid_name(k.feature)) {
      throw std::invalid_argument("invalid name: " + k.to_string());
    }
    if (auto* s = std::get_if<std::string>(&v); s && !is_valid_categorical(*s)) {
      throw std::invalid_argument("invalid categorical value for " + k.to_string());
    }
  }
  if (out.icd) {
    if (!out.terminal()) throw std::invalid_argument("ICD categories without a terminal state");
    for (const auto& c : *out.icd) {
      if (!is_valid_categorical(c) || c.find(';') != std::string::npos || c == "none") {
        throw std::invalid_argument("invalid ICD category '" + c + "'");
      }
    }
  }
}

}  // namespace ehrtraj
