#include "ehrtraj/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ehrtraj {

namespace {

FeatureSpec numeric(Unit u, std::string cat, std::string name, int period, double missing, double mean,
                    double patient_sd, double coeff, double noise, int decimals,
                    std::optional<double> lo = std::nullopt, std::optional<double> hi = std::nullopt) {
  FeatureSpec f;
  f.unit = u;
  f.category = std::move(cat);
  f.name = std::move(name);
  f.kind = FeatureKind::Numeric;
  f.period = period;
  f.missing = missing;
  f.mean = mean;
  f.patient_sd = patient_sd;
  f.coeff = coeff;
  f.noise = noise;
  f.decimals = decimals;
  f.min = lo;
  f.max = hi;
  return f;
}

FeatureSpec event(Unit u, std::string cat, std::string name, int period, double on, double off,
                  std::optional<std::string> icd = std::nullopt) {
  FeatureSpec f;
  f.unit = u;
  f.category = std::move(cat);
  f.name = std::move(name);
  f.kind = FeatureKind::Event;
  f.period = period;
  f.on_prob = on;
  f.off_prob = off;
  f.icd = std::move(icd);
  return f;
}

FeatureSpec categorical(Unit u, std::string cat, std::string name, int period, double missing,
                        std::vector<std::string> values, double switch_prob) {
  FeatureSpec f;
  f.unit = u;
  f.category = std::move(cat);
  f.name = std::move(name);
  f.kind = FeatureKind::Categorical;
  f.period = period;
  f.missing = missing;
  f.values = std::move(values);
  f.switch_prob = switch_prob;
  return f;
}

FeatureSpec binary(Unit u, std::string cat, std::string name, int period, double on, double off) {
  FeatureSpec f;
  f.unit = u;
  f.category = std::move(cat);
  f.name = std::move(name);
  f.kind = FeatureKind::Binary;
  f.period = period;
  f.on_prob = on;
  f.off_prob = off;
  return f;
}

template <typename T>
void read_key(const Json& obj, const char* key, T& dst) {
  if (auto it = obj.find(key); it != obj.end()) {
    try {
      dst = it->get<T>();
    } catch (const Json::exception&) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  }
}

void reject_unknown(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      throw ConfigError("unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
    }
  }
}

Json feature_to_json(const FeatureSpec& f) {
  Json j{{"unit", unit_name(f.unit)}, {"category", f.category}, {"name", f.name},
         {"kind", kind_name(f.kind)}, {"period", f.period},     {"missing", f.missing}};
  switch (f.kind) {
    case FeatureKind::Numeric:
      j["mean"] = f.mean;
      j["patient_sd"] = f.patient_sd;
      j["coeff"] = f.coeff;
      j["noise"] = f.noise;
      j["decimals"] = f.decimals;
      if (f.min) j["min"] = *f.min;
      if (f.max) j["max"] = *f.max;
      break;
    case FeatureKind::Categorical:
      j["values"] = f.values;
      j["switch_prob"] = f.switch_prob;
      break;
    case FeatureKind::Event:
    case FeatureKind::Binary:
      j["on_prob"] = f.on_prob;
      j["off_prob"] = f.off_prob;
      if (f.icd) j["icd"] = *f.icd;
      break;
  }
  return j;
}

FeatureSpec feature_from_json(const Json& j, std::size_t index) {
  const std::string where = "features[" + std::to_string(index) + "]";
  reject_unknown(j,
                 {"unit", "category", "name", "kind", "period", "missing", "mean", "patient_sd", "coeff",
                  "noise", "decimals", "min", "max", "values", "switch_prob", "on_prob", "off_prob", "icd"},
                 where);
  FeatureSpec f;
  std::string unit = "ED", kind = "numeric";
  read_key(j, "unit", unit);
  read_key(j, "kind", kind);
  auto u = parse_unit(unit);
  if (!u) throw ConfigError(where + ".unit: unknown unit '" + unit + "'");
  auto k = parse_kind(kind);
  if (!k) throw ConfigError(where + ".kind: unknown kind '" + kind + "'");
  f.unit = *u;
  f.kind = *k;
  read_key(j, "category", f.category);
  read_key(j, "name", f.name);
  read_key(j, "period", f.period);
  read_key(j, "missing", f.missing);
  read_key(j, "mean", f.mean);
  read_key(j, "patient_sd", f.patient_sd);
  read_key(j, "coeff", f.coeff);
  read_key(j, "noise", f.noise);
  read_key(j, "decimals", f.decimals);
  if (j.contains("min")) f.min = j.at("min").get<double>();
  if (j.contains("max")) f.max = j.at("max").get<double>();
  read_key(j, "values", f.values);
  read_key(j, "switch_prob", f.switch_prob);
  read_key(j, "on_prob", f.on_prob);
  read_key(j, "off_prob", f.off_prob);
  if (j.contains("icd")) f.icd = j.at("icd").get<std::string>();
  return f;
}

void check_prob(double p, const std::string& key) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("config key '" + key + "' must lie in [0, 1]");
}

}  // namespace

std::vector<std::string> default_icd_labels() {
  return {"infectious",  "neoplasms", "endocrine",     "blood",     "mental",        "nervous",
          "circulatory", "respiratory", "digestive",   "genitourinary", "pregnancy", "skin",
          "musculoskeletal", "congenital", "perinatal", "symptoms",  "injury",        "external"};
}

std::vector<FeatureSpec> default_catalog() {
  const Unit ED = Unit::ED, H = Unit::Hospital, I = Unit::ICU;
  return {
      numeric(ED, "Vital Signs", "Heart Rate", 1, 0.2, 85, 10, 0.85, 3, 0, 30, 200),
      numeric(ED, "Vital Signs", "Resp Rate", 2, 0.1, 17, 2, 0.8, 1.5, 0, 6, 50),
      numeric(ED, "Vital Signs", "O2 Saturation", 2, 0.1, 97, 1.5, 0.8, 0.8, 0, 70, 100),
      numeric(ED, "Vital Signs", "Temperature", 4, 0.1, 37.0, 0.4, 0.8, 0.15, 1, 34, 42),
      numeric(ED, "Vital Signs", "Systolic BP", 2, 0.1, 130, 15, 0.85, 5, 0, 60, 240),
      categorical(ED, "Vital Signs", "Rhythm", 4, 0.1, {"AFib", "Sinus", "Tachy"}, 0.05),
      event(ED, "Prescriptions", "Acetaminophen", 1, 0.05, 0.5, "symptoms"),
      event(ED, "Prescriptions", "Ondansetron", 1, 0.03, 0.6, "digestive"),
      event(ED, "Prescriptions", "Ceftriaxone", 1, 0.02, 0.5, "infectious"),
      event(ED, "Prescriptions", "Aspirin", 1, 0.02, 0.5, "circulatory"),
      numeric(H, "Lab Results", "Hemoglobin", 12, 0.05, 12.5, 1.5, 0.95, 0.3, 1, 4, 20),
      numeric(H, "Lab Results", "Creatinine", 12, 0.05, 1.0, 0.3, 0.95, 0.05, 2, 0.3, 12),
      numeric(H, "Lab Results", "Sodium", 12, 0.05, 139, 3, 0.9, 1, 0, 115, 165),
      numeric(H, "Lab Results", "Potassium", 12, 0.05, 4.2, 0.4, 0.9, 0.15, 1, 2, 7.5),
      numeric(H, "Lab Results", "Glucose", 6, 0.1, 120, 25, 0.8, 10, 0, 40, 600),
      numeric(H, "Lab Results", "WBC", 12, 0.05, 9, 3, 0.9, 0.8, 1, 0.5, 60),
      numeric(H, "Lab Results", "Lactate", 8, 0.3, 1.6, 0.5, 0.8, 0.2, 1, 0.3, 15),
      event(H, "Prescriptions", "Heparin", 8, 0.04, 0.1, "circulatory"),
      event(H, "Prescriptions", "Insulin", 6, 0.03, 0.1, "endocrine"),
      event(H, "Prescriptions", "Furosemide", 12, 0.03, 0.2, "genitourinary"),
      event(H, "Prescriptions", "Piperacillin", 6, 0.03, 0.1, "infectious"),
      event(H, "Prescriptions", "Morphine", 4, 0.03, 0.3, "injury"),
      numeric(I, "RoutineVitalSigns", "Heart Rate", 1, 0.05, 90, 12, 0.85, 3, 0, 30, 200),
      numeric(I, "RoutineVitalSigns", "Resp Rate", 1, 0.05, 19, 3, 0.8, 1.5, 0, 6, 50),
      numeric(I, "RoutineVitalSigns", "O2 Saturation", 1, 0.05, 96, 2, 0.8, 0.8, 0, 70, 100),
      numeric(I, "RoutineVitalSigns", "Mean BP", 1, 0.05, 78, 10, 0.85, 4, 0, 30, 160),
      numeric(I, "RoutineVitalSigns", "Temperature", 4, 0.05, 37.2, 0.5, 0.8, 0.15, 1, 34, 42),
      binary(I, "RoutineVitalSigns", "Ventilated", 4, 0.05, 0.05),
      event(I, "Inputs", "Norepinephrine", 1, 0.05, 0.15, "circulatory"),
      event(I, "Inputs", "Propofol", 1, 0.05, 0.1, "respiratory"),
      event(I, "Inputs", "Saline", 2, 0.1, 0.4),
      event(I, "Inputs", "Insulin Drip", 1, 0.03, 0.1, "endocrine"),
  };
}

CohortConfig CohortConfig::defaults() {
  CohortConfig c;
  c.units[Unit::ED] = {2, 10, 0.0005};
  c.units[Unit::Hospital] = {24, 96, 0.0005};
  c.units[Unit::ICU] = {12, 48, 0.003};
  c.icd_labels = default_icd_labels();
  c.features = default_catalog();
  return c;
}

void CohortConfig::validate() const {
  if (age_min < 0 || age_max < age_min) throw ConfigError("config key 'age_range' is invalid");
  if (!units.contains(Unit::ED)) throw ConfigError("config key 'units.ED' is required");
  for (const auto& [u, s] : units) {
    const std::string where = "units." + std::string(unit_name(u));
    if (s.los_min < 1 || s.los_max < s.los_min) throw ConfigError("config key '" + where + ".los_range' is invalid");
    check_prob(s.death_hazard, where + ".death_hazard");
    check_prob(s.discharge_hazard, where + ".discharge_hazard");
  }
  check_prob(p_hospital_admit, "p_hospital_admit");
  check_prob(icu_hazard, "icu_hazard");
  check_prob(icd_base_rate, "icd_base_rate");
  check_prob(icd_link_prob, "icd_link_prob");
  if (p_hospital_admit > 0 && !units.contains(Unit::Hospital)) {
    throw ConfigError("config key 'units.Hospital' is required when p_hospital_admit > 0");
  }
  if (icu_hazard > 0 && p_hospital_admit > 0 && !units.contains(Unit::ICU)) {
    throw ConfigError("config key 'units.ICU' is required when icu_hazard > 0");
  }
  std::set<std::string> labels;
  for (const auto& l : icd_labels) {
    if (!is_valid_categorical(l) || l.find(';') != std::string::npos || l == "none" || !labels.insert(l).second) {
      throw ConfigError("config key 'icd_labels' has an invalid or duplicate label '" + l + "'");
    }
  }
  std::set<FeatureKey> seen;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    const std::string where = "features[" + std::to_string(i) + "]";
    if (!is_valid_name(f.category)) throw ConfigError(where + ".category is not a valid name");
    if (!is_valid_name(f.name)) throw ConfigError(where + ".name is not a valid name");
    if (!seen.insert({f.unit, f.category, f.name}).second) throw ConfigError(where + " duplicates a feature");
    if (f.period < 1) throw ConfigError(where + ".period must be >= 1");
    check_prob(f.missing, where + ".missing");
    check_prob(f.switch_prob, where + ".switch_prob");
    check_prob(f.on_prob, where + ".on_prob");
    check_prob(f.off_prob, where + ".off_prob");
    if (!(f.coeff > -1.0 && f.coeff < 1.0)) throw ConfigError(where + ".coeff must lie in (-1, 1)");
    if (f.noise < 0 || f.patient_sd < 0) throw ConfigError(where + ".noise must be non-negative");
    if (f.decimals < 0 || f.decimals > 2) throw ConfigError(where + ".decimals must lie in [0, 2]");
    if (f.min && f.max && *f.min > *f.max) throw ConfigError(where + ".min exceeds max");
    if (f.kind == FeatureKind::Categorical) {
      if (f.values.empty()) throw ConfigError(where + ".values must not be empty");
      for (const auto& v : f.values) {
        if (!is_valid_categorical(v)) throw ConfigError(where + ".values has an invalid value");
      }
    }
    if (f.icd && !labels.contains(*f.icd)) throw ConfigError(where + ".icd names an unknown label");
  }
}

Json CohortConfig::to_json() const {
  Json u = Json::object();
  for (const auto& [unit, s] : units) {
    u[std::string(unit_name(unit))] = {{"los_range", {s.los_min, s.los_max}},
                                       {"death_hazard", s.death_hazard},
                                       {"discharge_hazard", s.discharge_hazard}};
  }
  Json feats = Json::array();
  for (const auto& f : features) feats.push_back(feature_to_json(f));
  return {{"n_patients", n_patients},
          {"seed", seed},
          {"age_range", {age_min, age_max}},
          {"units", u},
          {"p_hospital_admit", p_hospital_admit},
          {"icu_hazard", icu_hazard},
          {"icd_labels", icd_labels},
          {"icd_base_rate", icd_base_rate},
          {"icd_link_prob", icd_link_prob},
          {"features", feats}};
}

CohortConfig CohortConfig::from_json(const Json& j) {
  reject_unknown(j,
                 {"n_patients", "seed", "age_range", "units", "p_hospital_admit", "icu_hazard", "icd_labels",
                  "icd_base_rate", "icd_link_prob", "features"},
                 "");
  CohortConfig c = defaults();
  read_key(j, "n_patients", c.n_patients);
  read_key(j, "seed", c.seed);
  if (j.contains("age_range")) {
    const auto r = j.at("age_range").get<std::vector<int>>();
    if (r.size() != 2) throw ConfigError("config key 'age_range' needs two values");
    c.age_min = r[0];
    c.age_max = r[1];
  }
  if (j.contains("units")) {
    const auto& units = j.at("units");
    reject_unknown(units, {"ED", "Hospital", "ICU"}, "units");
    for (const auto& [name, spec] : units.items()) {
      const Unit u = *parse_unit(name);
      reject_unknown(spec, {"los_range", "death_hazard", "discharge_hazard"}, "units." + name);
      UnitSpec s = c.units.contains(u) ? c.units.at(u) : UnitSpec{};
      if (spec.contains("los_range")) {
        const auto r = spec.at("los_range").get<std::vector<int>>();
        if (r.size() != 2) throw ConfigError("config key 'units." + name + ".los_range' needs two values");
        s.los_min = r[0];
        s.los_max = r[1];
      }
      read_key(spec, "death_hazard", s.death_hazard);
      read_key(spec, "discharge_hazard", s.discharge_hazard);
      c.units[u] = s;
    }
  }
  read_key(j, "p_hospital_admit", c.p_hospital_admit);
  read_key(j, "icu_hazard", c.icu_hazard);
  read_key(j, "icd_labels", c.icd_labels);
  read_key(j, "icd_base_rate", c.icd_base_rate);
  read_key(j, "icd_link_prob", c.icd_link_prob);
  if (j.contains("features")) {
    c.features.clear();
    std::size_t i = 0;
    for (const auto& f : j.at("features")) c.features.push_back(feature_from_json(f, i++));
  }
  c.validate();
  return c;
}

namespace {

struct Interval {
  int start = 0;
  int end = 0;  // inclusive
};

double round_to(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::nearbyint(v * scale) / scale;
}

int draw_los(Rng& rng, const UnitSpec& s) {
  if (s.discharge_hazard <= 0.0) return static_cast<int>(uniform_int(rng, s.los_min, s.los_max));
  int len = s.los_min;
  while (len < s.los_max && !bernoulli(rng, s.discharge_hazard)) ++len;
  return len;
}

}  // namespace

PatientRecord generate_patient(const CohortConfig& cfg, Rng& rng, std::string patient_id) {
  PatientRecord r;
  r.patient_id = std::move(patient_id);
  r.static_info["Age"] = std::to_string(uniform_int(rng, cfg.age_min, cfg.age_max));
  r.static_info["Sex"] = bernoulli(rng, 0.5) ? "F" : "M";

  // Unit course.
  std::map<Unit, Interval> stay;
  const UnitSpec& ed = cfg.units.at(Unit::ED);
  const int ed_end = draw_los(rng, ed);
  std::optional<int> death;
  for (int h = 1; h <= ed_end && !death; ++h) {
    if (bernoulli(rng, ed.death_hazard)) death = h;
  }
  stay[Unit::ED] = {0, death.value_or(ed_end)};
  int end = death.value_or(ed_end);
  if (!death) {
    r.state_events.push_back({ed_end, StateKind::EDDischarge});
    if (bernoulli(rng, cfg.p_hospital_admit)) {
      r.state_events.push_back({ed_end, StateKind::HospAdmit});
      const UnitSpec& hs = cfg.units.at(Unit::Hospital);
      int hosp_end = ed_end + draw_los(rng, hs);
      std::optional<Interval> icu;
      for (int h = ed_end; h < hosp_end && !icu; ++h) {
        if (bernoulli(rng, cfg.icu_hazard)) {
          const UnitSpec& is = cfg.units.at(Unit::ICU);
          icu = Interval{h, h + draw_los(rng, is)};
          hosp_end = std::max(hosp_end, icu->end + 1);
        }
      }
      for (int h = ed_end + 1; h <= hosp_end && !death; ++h) {
        const bool in_icu = icu && h > icu->start && h <= icu->end;
        const double hazard = in_icu ? cfg.units.at(Unit::ICU).death_hazard : hs.death_hazard;
        if (bernoulli(rng, hazard)) death = h;
      }
      end = death.value_or(hosp_end);
      stay[Unit::Hospital] = {ed_end, end};
      if (icu && icu->start <= end) {
        r.state_events.push_back({icu->start, StateKind::ICUAdmit});
        stay[Unit::ICU] = {icu->start, std::min(icu->end, end)};
        if (!death || *death > icu->end) r.state_events.push_back({icu->end, StateKind::ICUDischarge});
      }
      if (!death) r.state_events.push_back({end, StateKind::HospDischarge});
    }
  }
  if (death) r.state_events.push_back({*death, StateKind::Death});
  std::stable_sort(r.state_events.begin(), r.state_events.end(),
                   [](const StateEvent& a, const StateEvent& b) { return a.hour < b.hour; });
  r.total_hours = end;

  // Features.
  std::set<std::string> fired_icd;
  for (const auto& f : cfg.features) {
    auto it = stay.find(f.unit);
    if (it == stay.end()) continue;
    const Interval iv = it->second;
    FeatureSeries series{f.kind, {}};
    const int phase = static_cast<int>(uniform_int(rng, 0, f.period - 1));
    const double mu = f.mean + f.patient_sd * normal01(rng);
    double x = mu + f.noise / std::sqrt(1.0 - f.coeff * f.coeff) * normal01(rng);
    std::size_t cat_state = f.values.empty() ? 0 : static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(f.values.size()) - 1));
    bool on = f.kind == FeatureKind::Binary && bernoulli(rng, f.on_prob / std::max(1e-12, f.on_prob + f.off_prob));
    for (int h = iv.start; h <= iv.end; ++h) {
      switch (f.kind) {
        case FeatureKind::Numeric:
          if (h > iv.start) x = mu + f.coeff * (x - mu) + f.noise * normal01(rng);
          break;
        case FeatureKind::Categorical:
          if (h > iv.start && f.values.size() > 1 && bernoulli(rng, f.switch_prob)) {
            const auto shift = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(f.values.size()) - 1));
            cat_state = (cat_state + shift) % f.values.size();
          }
          break;
        case FeatureKind::Event:
        case FeatureKind::Binary:
          on = on ? !bernoulli(rng, f.off_prob) : bernoulli(rng, f.on_prob);
          break;
      }
      const bool scheduled = (h - iv.start) % f.period == phase;
      const bool dropped = bernoulli(rng, f.missing);
      if (!scheduled || dropped) continue;
      switch (f.kind) {
        case FeatureKind::Numeric: {
          double v = round_to(x, f.decimals);
          if (f.min) v = std::max(v, *f.min);
          if (f.max) v = std::min(v, *f.max);
          series.entries.push_back({h, Decimal::from_double(v)});
          break;
        }
        case FeatureKind::Categorical:
          series.entries.push_back({h, f.values[cat_state]});
          break;
        case FeatureKind::Binary:
          series.entries.push_back({h, on});
          break;
        case FeatureKind::Event:
          if (on) {
            series.entries.push_back({h, std::monostate{}});
            if (f.icd) fired_icd.insert(*f.icd);
          }
          break;
      }
    }
    if (!series.entries.empty()) r.units[f.unit].categories[f.category].features[f.name] = std::move(series);
  }
  for (const auto& [u, _] : stay) r.units[u];

  for (const auto& label : cfg.icd_labels) {
    const double p = fired_icd.contains(label) ? cfg.icd_link_prob : cfg.icd_base_rate;
    if (bernoulli(rng, p)) r.icd_categories.insert(label);
  }
  return r;
}

std::vector<PatientRecord> generate_cohort(const CohortConfig& cfg) {
  cfg.validate();
  std::vector<PatientRecord> out;
  out.reserve(cfg.n_patients);
  for (std::size_t i = 0; i < cfg.n_patients; ++i) {
    Rng rng = child_rng(cfg.seed, i);
    char id[32];
    std::snprintf(id, sizeof id, "P%06zu", i + 1);
    out.push_back(generate_patient(cfg, rng, id));
  }
  return out;
}

}  // namespace ehrtraj
