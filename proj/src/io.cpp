#include "ehrtraj/io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ehrtraj {

Json value_to_json(const FeatureValue& v) {
  return std::visit(
      [](const auto& x) -> Json {
        using V = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<V, std::monostate>) {
          return nullptr;
        } else if constexpr (std::is_same_v<V, Decimal>) {
          if (x.hundredths() % 100 == 0) return x.hundredths() / 100;
          return x.to_double();
        } else {
          return x;
        }
      },
      v);
}

FeatureValue value_from_json(FeatureKind kind, const Json& j) {
  switch (kind) {
    case FeatureKind::Event:
      if (!j.is_null()) throw RecordError("event entries carry no value");
      return std::monostate{};
    case FeatureKind::Numeric:
      if (!j.is_number()) throw RecordError("numeric entry is not a number");
      return Decimal::from_double(j.get<double>());
    case FeatureKind::Categorical:
      if (!j.is_string()) throw RecordError("categorical entry is not a string");
      return j.get<std::string>();
    case FeatureKind::Binary:
      if (!j.is_boolean()) throw RecordError("binary entry is not a boolean");
      return j.get<bool>();
  }
  return std::monostate{};
}

Json to_json(const PatientRecord& r) {
  Json j;
  j["schema_version"] = kRecordSchemaVersion;
  j["patient_id"] = r.patient_id;
  j["static"] = Json::object();
  for (const auto& [k, v] : r.static_info) j["static"][k] = v;
  j["total_hours"] = r.total_hours;
  Json units = Json::object();
  for (const auto& [unit, ud] : r.units) {
    Json u;
    u["los_remaining"] = ud.los_remaining ? Json(*ud.los_remaining) : Json(nullptr);
    Json cats = Json::object();
    for (const auto& [cat, cd] : ud.categories) {
      Json feats = Json::object();
      for (const auto& [feat, series] : cd.features) {
        Json entries = Json::array();
        for (const auto& e : series.entries) {
          if (series.kind == FeatureKind::Event) {
            entries.push_back(Json::array({e.hour}));
          } else {
            entries.push_back(Json::array({e.hour, value_to_json(e.value)}));
          }
        }
        feats[feat] = {{"kind", kind_name(series.kind)}, {"entries", std::move(entries)}};
      }
      cats[cat] = std::move(feats);
    }
    u["categories"] = std::move(cats);
    units[std::string(unit_name(unit))] = std::move(u);
  }
  j["units"] = std::move(units);
  Json events = Json::array();
  for (const auto& ev : r.state_events) events.push_back(Json::array({ev.hour, state_name(ev.kind)}));
  j["state_events"] = std::move(events);
  j["icd"] = r.icd_categories;
  return j;
}

PatientRecord record_from_json(const Json& j) {
  if (!j.is_object()) throw RecordError("record must be a JSON object");
  if (!j.contains("schema_version")) throw RecordError("missing schema_version");
  if (j.at("schema_version").get<int>() != kRecordSchemaVersion) {
    throw RecordError("unsupported schema_version " + j.at("schema_version").dump());
  }
  PatientRecord r;
  r.patient_id = j.at("patient_id").get<std::string>();
  for (const auto& [k, v] : j.at("static").items()) r.static_info[k] = v.get<std::string>();
  r.total_hours = j.at("total_hours").get<int>();
  for (const auto& [uname, u] : j.at("units").items()) {
    auto unit = parse_unit(uname);
    if (!unit) throw RecordError("unknown unit '" + uname + "'");
    UnitData& ud = r.units[*unit];
    if (u.contains("los_remaining") && !u.at("los_remaining").is_null()) {
      ud.los_remaining = u.at("los_remaining").get<int>();
    }
    for (const auto& [cat, feats] : u.at("categories").items()) {
      for (const auto& [feat, fj] : feats.items()) {
        auto kind = parse_kind(fj.at("kind").get<std::string>());
        if (!kind) throw RecordError("unknown kind for feature '" + feat + "'");
        FeatureSeries series{*kind, {}};
        for (const auto& e : fj.at("entries")) {
          const int hour = e.at(0).get<int>();
          if (*kind == FeatureKind::Event) {
            if (e.size() != 1) throw RecordError("event entry of '" + feat + "' carries a value");
            series.entries.push_back({hour, std::monostate{}});
          } else {
            if (e.size() != 2) throw RecordError("entry of '" + feat + "' needs [hour, value]");
            series.entries.push_back({hour, value_from_json(*kind, e.at(1))});
          }
        }
        ud.categories[cat].features[feat] = std::move(series);
      }
    }
  }
  for (const auto& ev : j.at("state_events")) {
    auto kind = parse_state(ev.at(1).get<std::string>());
    if (!kind) throw RecordError("unknown state event " + ev.at(1).dump());
    r.state_events.push_back({ev.at(0).get<int>(), *kind});
  }
  for (const auto& c : j.at("icd")) r.icd_categories.insert(c.get<std::string>());
  return r;
}

namespace {

Json key_to_json(const FeatureKey& k) {
  return Json::array({unit_name(k.unit), k.category, k.feature});
}

FeatureKey key_from_json(const Json& j) {
  auto unit = parse_unit(j.at(0).get<std::string>());
  if (!unit) throw RecordError("unknown unit in feature key " + j.dump());
  return {*unit, j.at(1).get<std::string>(), j.at(2).get<std::string>()};
}

FeatureKind kind_of(const FeatureValue& v) {
  if (std::holds_alternative<Decimal>(v)) return FeatureKind::Numeric;
  if (std::holds_alternative<std::string>(v)) return FeatureKind::Categorical;
  if (std::holds_alternative<bool>(v)) return FeatureKind::Binary;
  return FeatureKind::Event;
}

}  // namespace

Json to_json(const TimestepOutput& out) {
  Json j;
  j["los"] = Json::object();
  for (const auto& [u, h] : out.los) j["los"][std::string(unit_name(u))] = h;
  j["states"] = Json::array();
  for (auto s : out.states) j["states"].push_back(state_name(s));
  j["events"] = Json::array();
  for (const auto& k : out.events) j["events"].push_back(key_to_json(k));
  j["values"] = Json::array();
  for (const auto& [k, v] : out.values) {
    j["values"].push_back({{"key", key_to_json(k)},
                           {"kind", kind_name(kind_of(v))},
                           {"value", value_to_json(v)}});
  }
  j["icd"] = out.icd ? Json(*out.icd) : Json(nullptr);
  return j;
}

TimestepOutput output_from_json(const Json& j) {
  TimestepOutput out;
  for (const auto& [u, h] : j.at("los").items()) {
    auto unit = parse_unit(u);
    if (!unit) throw RecordError("unknown unit '" + u + "'");
    out.los[*unit] = h.get<int>();
  }
  for (const auto& s : j.at("states")) {
    auto kind = parse_state(s.get<std::string>());
    if (!kind) throw RecordError("unknown state " + s.dump());
    out.states.push_back(*kind);
  }
  for (const auto& k : j.at("events")) out.events.insert(key_from_json(k));
  for (const auto& v : j.at("values")) {
    auto kind = parse_kind(v.at("kind").get<std::string>());
    if (!kind) throw RecordError("unknown kind " + v.at("kind").dump());
    out.values.emplace(key_from_json(v.at("key")), value_from_json(*kind, v.at("value")));
  }
  if (!j.at("icd").is_null()) out.icd = j.at("icd").get<std::set<std::string>>();
  return out;
}

std::string cohort_to_string(const std::vector<PatientRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

void write_cohort(const std::filesystem::path& path, const std::vector<PatientRecord>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << cohort_to_string(records);
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::vector<PatientRecord> cohort_from_string(const std::string& text) {
  std::vector<PatientRecord> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw RecordError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<PatientRecord> read_cohort(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return cohort_from_string(ss.str());
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return Json::parse(f);
}

}  // namespace ehrtraj
