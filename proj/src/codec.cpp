#include "ehrtraj/codec.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace ehrtraj {

namespace {

std::string los_line(int hours) { return "LOS: " + std::to_string(hours) + " hours"; }

std::optional<int> parse_nonneg_int(std::string_view s) {
  if (s.empty() || s.size() > 9) return std::nullopt;
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + sep.size();
  }
}

std::string join_rel_hours(const std::vector<int>& rel) {
  std::string out;
  for (std::size_t i = 0; i < rel.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(rel[i]);
  }
  return out;
}

// Which unit block renders a state transition on the output side.
Unit state_unit(StateKind kind) {
  switch (kind) {
    case StateKind::EDDischarge: return Unit::ED;
    case StateKind::HospAdmit:
    case StateKind::HospDischarge:
    case StateKind::Death: return Unit::Hospital;
    case StateKind::ICUAdmit:
    case StateKind::ICUDischarge: return Unit::ICU;
  }
  return Unit::Hospital;
}

bool is_admit(StateKind k) { return k == StateKind::HospAdmit || k == StateKind::ICUAdmit; }
bool is_discharge(StateKind k) {
  return k == StateKind::EDDischarge || k == StateKind::HospDischarge || k == StateKind::ICUDischarge;
}

}  // namespace

std::string render_value(const FeatureValue& value, bool output_side) {
  return std::visit(
      [&](const auto& v) -> std::string {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, std::monostate>) {
          return {};
        } else if constexpr (std::is_same_v<V, Decimal>) {
          return output_side ? v.to_string_fractional() : v.to_string();
        } else if constexpr (std::is_same_v<V, bool>) {
          return v ? "yes" : "no";
        } else {
          return v;
        }
      },
      value);
}

std::string render_series(const FeatureSeries& series, int t, std::optional<int> window_hours) {
  const int lo = window_hours ? std::max(0, t - *window_hours) : 0;
  std::vector<const SeriesEntry*> in_window;
  for (const auto& e : series.entries) {
    if (e.hour >= lo && e.hour <= t) in_window.push_back(&e);
  }
  if (in_window.empty()) return {};

  struct Item {
    std::vector<int> hours;  // absolute, ascending
    bool run = false;
    const FeatureValue* value = nullptr;
  };
  std::vector<Item> items;
  std::vector<const SeriesEntry*> singles;
  for (std::size_t i = 0; i < in_window.size();) {
    std::size_t j = i + 1;
    while (j < in_window.size() && in_window[j]->hour == in_window[j - 1]->hour + 1 &&
           in_window[j]->value == in_window[i]->value) {
      ++j;
    }
    if (j - i >= 2) {
      items.push_back({{in_window[i]->hour, in_window[j - 1]->hour}, true, &in_window[i]->value});
    } else {
      singles.push_back(in_window[i]);
    }
    i = j;
  }
  // Three or more scattered hours sharing a value collapse into a slash group.
  std::vector<bool> used(singles.size(), false);
  for (std::size_t i = 0; i < singles.size(); ++i) {
    if (used[i]) continue;
    std::vector<std::size_t> same{i};
    for (std::size_t j = i + 1; j < singles.size(); ++j) {
      if (!used[j] && singles[j]->value == singles[i]->value) same.push_back(j);
    }
    if (same.size() >= 3) {
      Item item{{}, false, &singles[i]->value};
      for (std::size_t k : same) {
        used[k] = true;
        item.hours.push_back(singles[k]->hour);
      }
      items.push_back(std::move(item));
    } else {
      used[i] = true;
      items.push_back({{singles[i]->hour}, false, &singles[i]->value});
    }
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.hours.front() < b.hours.front(); });

  const bool event = series.kind == FeatureKind::Event;
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Item& item = items[i];
    if (i) out += ", ";
    if (item.run) {
      out += std::to_string(t - item.hours.front());
      out += '-';
      out += std::to_string(t - item.hours.back());
      if (!event) out += ": " + render_value(*item.value, false);
    } else if (item.hours.size() > 1) {
      for (std::size_t k = 0; k < item.hours.size(); ++k) {
        if (k) out += '/';
        out += std::to_string(t - item.hours[k]);
      }
      if (!event) out += ": " + render_value(*item.value, false);
    } else {
      out += std::to_string(t - item.hours.front());
      if (!event) out += ":" + render_value(*item.value, false);
    }
  }
  return out;
}

std::optional<std::vector<SeriesItem>> parse_series(std::string_view body, bool is_event) {
  if (body.empty()) return std::nullopt;
  std::vector<SeriesItem> out;
  for (std::string_view item : split(body, ", ")) {
    std::string_view spec = item;
    std::optional<std::string> value;
    if (!is_event) {
      const std::size_t colon = item.find(':');
      if (colon == std::string_view::npos) return std::nullopt;
      spec = item.substr(0, colon);
      std::string_view v = item.substr(colon + 1);
      if (!v.empty() && v.front() == ' ') v.remove_prefix(1);
      if (v.empty()) return std::nullopt;
      value = std::string(v);
    }
    std::vector<int> hours;
    if (spec.find('-') != std::string_view::npos) {
      auto parts = split(spec, "-");
      if (parts.size() != 2) return std::nullopt;
      auto a = parse_nonneg_int(parts[0]);
      auto b = parse_nonneg_int(parts[1]);
      if (!a || !b || *a <= *b) return std::nullopt;
      for (int h = *a; h >= *b; --h) hours.push_back(h);
    } else if (spec.find('/') != std::string_view::npos) {
      for (auto part : split(spec, "/")) {
        auto h = parse_nonneg_int(part);
        if (!h) return std::nullopt;
        hours.push_back(*h);
      }
    } else {
      auto h = parse_nonneg_int(spec);
      if (!h) return std::nullopt;
      hours.push_back(*h);
    }
    for (int h : hours) out.push_back({h, value});
  }
  std::sort(out.begin(), out.end(),
            [](const SeriesItem& a, const SeriesItem& b) { return a.rel_hour > b.rel_hour; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].rel_hour == out[i - 1].rel_hour) return std::nullopt;
  }
  return out;
}

std::string RenderedInput::text() const {
  std::string out = header;
  for (const auto& u : units) {
    out += u.preamble;
    for (const auto& s : u.sections) out += s.text;
  }
  return out;
}

std::string RenderedInput::skeleton() const {
  std::string out = header;
  for (const auto& u : units) out += u.preamble;
  return out;
}

RenderedInput render_input(const PatientRecord& record, int t, const RenderConfig& cfg, Rng* rng) {
  if (t < 0 || t > record.total_hours) {
    throw std::out_of_range("render hour " + std::to_string(t) + " outside record");
  }
  if (cfg.los_noise_pct < 0.0 || cfg.los_noise_pct >= 1.0) {
    throw std::invalid_argument("los_noise_pct must lie in [0, 1)");
  }
  RenderedInput out;
  out.header = "Patient:\n";
  for (const auto& [k, v] : record.static_info) out.header += "  " + k + ": " + v + "\n";
  out.header += "  Elapsed: " + std::to_string(t) + " hours\n";

  for (Unit unit : kAllUnits) {
    std::string lines;
    auto ud = record.units.find(unit);
    if (cfg.include_los && ud != record.units.end() && ud->second.los_remaining) {
      int hours = *ud->second.los_remaining;
      if (rng && cfg.los_noise_pct > 0.0) hours = noisy_los(hours, cfg.los_noise_pct, *rng);
      lines += "  " + los_line(hours) + "\n";
    }
    std::vector<int> admitted, discharged, died;
    for (const auto& ev : record.state_events) {
      if (ev.hour > t) continue;
      const int rel = t - ev.hour;
      if (ev.kind == StateKind::Death) {
        if (unit == Unit::Hospital) died.push_back(rel);
      } else if (state_unit(ev.kind) == unit) {
        (is_admit(ev.kind) ? admitted : discharged).push_back(rel);
      }
    }
    if (!admitted.empty()) lines += "  Admitted: " + join_rel_hours(admitted) + "\n";
    if (!discharged.empty()) lines += "  Discharged: " + join_rel_hours(discharged) + "\n";
    if (!died.empty()) lines += "  Died: " + join_rel_hours(died) + "\n";

    RenderedUnit ru{unit, {}, {}};
    if (ud != record.units.end()) {
      for (const auto& [cat, cd] : ud->second.categories) {
        std::string block;
        for (const auto& [feat, series] : cd.features) {
          std::string body = render_series(series, t, cfg.window_hours);
          if (!body.empty()) block += "    " + feat + ": " + body + "\n";
        }
        if (!block.empty()) ru.sections.push_back({unit, cat, "  " + cat + ":\n" + block});
      }
    }
    if (lines.empty() && ru.sections.empty()) continue;
    ru.preamble = std::string(unit_name(unit)) + ":\n" + lines;
    out.units.push_back(std::move(ru));
  }
  return out;
}

std::string render_section(const PatientRecord& record, int t, Unit unit,
                           const std::string& category, std::optional<int> window_hours) {
  auto ud = record.units.find(unit);
  if (ud == record.units.end()) return {};
  auto cd = ud->second.categories.find(category);
  if (cd == ud->second.categories.end()) return {};
  std::string block;
  for (const auto& [feat, series] : cd->second.features) {
    std::string body = render_series(series, t, window_hours);
    if (!body.empty()) block += "  " + feat + ": " + body + "\n";
  }
  if (block.empty()) return {};
  return std::string(unit_name(unit)) + " / " + category + ":\n" + block;
}

std::vector<std::pair<Unit, std::string>> sections_at(const PatientRecord& record, int t) {
  std::vector<std::pair<Unit, std::string>> out;
  for (const auto& [unit, ud] : record.units) {
    for (const auto& [cat, cd] : ud.categories) {
      bool any = false;
      for (const auto& [feat, series] : cd.features) {
        if (!series.entries.empty() && series.entries.front().hour <= t) any = true;
      }
      if (any) out.emplace_back(unit, cat);
    }
  }
  return out;
}

namespace {

struct FeatureLine {
  std::string name;
  std::string text;
};

std::map<std::pair<Unit, std::string>, std::vector<FeatureLine>> group_feature_lines(
    const TimestepOutput& out) {
  std::map<std::pair<Unit, std::string>, std::vector<FeatureLine>> grouped;
  for (const auto& k : out.events) {
    grouped[{k.unit, k.category}].push_back({k.feature, "- " + k.feature});
  }
  for (const auto& [k, v] : out.values) {
    grouped[{k.unit, k.category}].push_back({k.feature, k.feature + ": " + render_value(v, true)});
  }
  for (auto& [_, lines] : grouped) {
    std::sort(lines.begin(), lines.end(),
              [](const FeatureLine& a, const FeatureLine& b) { return a.name < b.name; });
  }
  return grouped;
}

Unit icd_unit(const TimestepOutput& out) {
  if (out.has_state(StateKind::Death) || out.has_state(StateKind::HospDischarge)) return Unit::Hospital;
  return Unit::ED;
}

std::string render_icd(const std::set<std::string>& icd) {
  if (icd.empty()) return "none";
  std::string s;
  for (const auto& c : icd) {
    if (!s.empty()) s += ';';
    s += c;
  }
  return s;
}

}  // namespace

std::string render_output(const TimestepOutput& out) {
  check_output(out);
  if (out.empty()) return std::string(kEmptyOutputText);
  const auto grouped = group_feature_lines(out);
  std::string text;
  for (Unit unit : kAllUnits) {
    std::string body;
    if (auto it = out.los.find(unit); it != out.los.end()) body += "  " + los_line(it->second) + "\n";
    for (StateKind k : out.states) {
      if (state_unit(k) == unit && is_admit(k)) body += "  State: ADMITTED\n";
    }
    for (StateKind k : out.states) {
      if (state_unit(k) != unit) continue;
      if (is_discharge(k)) body += "  Disposition: DISCHARGED\n";
      if (k == StateKind::Death) body += "  Disposition: DIED\n";
    }
    if (out.icd && icd_unit(out) == unit) body += "  ICD categories: " + render_icd(*out.icd) + "\n";
    for (const auto& [uc, lines] : grouped) {
      if (uc.first != unit) continue;
      body += "  " + uc.second + ":\n";
      for (const auto& l : lines) body += "    " + l.text + "\n";
    }
    if (!body.empty()) text += std::string(unit_name(unit)) + ":\n" + body;
  }
  return text;
}

std::string render_section_output(const TimestepOutput& out, Unit unit, const std::string& category) {
  const auto grouped = group_feature_lines(out);
  auto it = grouped.find({unit, category});
  if (it == grouped.end()) return std::string(kEmptyOutputText);
  std::string text;
  for (const auto& l : it->second) text += l.text + "\n";
  return text;
}

FeatureSchema schema_of(const std::vector<PatientRecord>& records) {
  FeatureSchema schema;
  for (const auto& r : records) {
    for (const auto& [unit, ud] : r.units) {
      for (const auto& [cat, cd] : ud.categories) {
        for (const auto& [feat, series] : cd.features) {
          schema.emplace(FeatureKey{unit, cat, feat}, series.kind);
        }
      }
    }
  }
  return schema;
}

std::string_view status_name(ParseStatus status) {
  switch (status) {
    case ParseStatus::Ok: return "ok";
    case ParseStatus::Partial: return "partial";
    case ParseStatus::Malformed: return "malformed";
  }
  return "?";
}

namespace {

std::size_t leading_spaces(std::string_view line) {
  std::size_t n = 0;
  while (n < line.size() && line[n] == ' ') ++n;
  return n;
}

std::vector<std::string_view> split_lines(std::string_view text, bool& truncated) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  truncated = false;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      truncated = true;
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

}  // namespace

ParseResult parse_output(std::string_view text, const FeatureSchema& schema) {
  ParseResult result;
  auto diag = [&](int line, int col, std::string msg) {
    result.diagnostics.push_back({line, col, std::move(msg)});
  };

  bool truncated = false;
  auto lines = split_lines(text, truncated);
  if (truncated) {
    diag(static_cast<int>(lines.size()), 1, "incomplete final line dropped");
    lines.pop_back();
  }
  if (lines.empty()) {
    if (!truncated) diag(1, 1, "empty output");
    result.status = ParseStatus::Malformed;
    return result;
  }
  if (lines.size() == 1 && lines[0] == kEmptyOutputText.substr(0, kEmptyOutputText.size() - 1)) {
    result.status = ParseStatus::Ok;
    return result;
  }

  TimestepOutput& out = result.output;
  std::optional<Unit> unit;
  std::optional<std::string> category;
  bool structure = false;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int lineno = static_cast<int>(i) + 1;
    std::string_view line = lines[i];
    const std::size_t indent = leading_spaces(line);
    std::string_view content = line.substr(indent);
    if (content.empty()) {
      diag(lineno, 1, "blank line");
      continue;
    }
    if (indent == 0) {
      category.reset();
      unit.reset();
      if (content.back() == ':') {
        if (auto u = parse_unit(content.substr(0, content.size() - 1))) {
          unit = *u;
          structure = true;
          continue;
        }
      }
      diag(lineno, 1, "expected a unit heading (ED:, Hospital: or ICU:)");
      continue;
    }
    if (!unit) {
      diag(lineno, 1, "line outside a unit block");
      continue;
    }
    const int col = static_cast<int>(indent) + 1;
    if (indent == 2) {
      category.reset();
      const std::size_t sep = content.find(": ");
      if (sep == std::string_view::npos) {
        if (content.back() == ':' && is_valid_name(content.substr(0, content.size() - 1))) {
          category = std::string(content.substr(0, content.size() - 1));
        } else {
          diag(lineno, col, "expected a category heading or unit-level key");
        }
        continue;
      }
      const std::string_view key = content.substr(0, sep);
      const std::string_view value = content.substr(sep + 2);
      const int vcol = col + static_cast<int>(sep) + 2;
      if (key == "LOS") {
        std::optional<int> hours;
        if (value.ends_with(" hours")) hours = parse_nonneg_int(value.substr(0, value.size() - 6));
        if (!hours) {
          diag(lineno, vcol, "LOS must read '<n> hours'");
        } else if (!out.los.emplace(*unit, *hours).second) {
          diag(lineno, col, "duplicate LOS line");
        }
      } else if (key == "State") {
        if (value == "ADMITTED" && *unit != Unit::ED) {
          out.states.push_back(*unit == Unit::Hospital ? StateKind::HospAdmit : StateKind::ICUAdmit);
        } else {
          diag(lineno, vcol, "unknown state '" + std::string(value) + "'");
        }
      } else if (key == "Disposition") {
        if (value == "DIED") {
          out.states.push_back(StateKind::Death);
        } else if (value == "DISCHARGED") {
          out.states.push_back(*unit == Unit::ED         ? StateKind::EDDischarge
                               : *unit == Unit::Hospital ? StateKind::HospDischarge
                                                         : StateKind::ICUDischarge);
        } else {
          diag(lineno, vcol, "unknown disposition '" + std::string(value) + "'");
        }
      } else if (key == "ICD categories") {
        std::set<std::string> labels;
        bool ok = !value.empty();
        if (value != "none") {
          for (auto part : split(value, ";")) {
            if (!is_valid_categorical(part) || part == "none") ok = false;
            labels.emplace(part);
          }
        }
        if (!ok) {
          diag(lineno, vcol, "malformed ICD category list");
        } else if (out.icd) {
          diag(lineno, col, "duplicate ICD line");
        } else {
          out.icd = std::move(labels);
        }
      } else {
        diag(lineno, col, "unknown unit-level key '" + std::string(key) + "'");
      }
      continue;
    }
    if (indent == 4) {
      if (!category) {
        diag(lineno, col, "feature line outside a category");
        continue;
      }
      if (content.starts_with("- ")) {
        std::string name(content.substr(2));
        FeatureKey key{*unit, *category, name};
        auto known = schema.find(key);
        if (!is_valid_name(name)) {
          diag(lineno, col + 2, "invalid feature name");
        } else if (known != schema.end() && known->second != FeatureKind::Event) {
          diag(lineno, col, "feature '" + name + "' needs a value");
        } else if (out.values.contains(key) || !out.events.insert(key).second) {
          diag(lineno, col, "duplicate feature '" + name + "'");
        }
        continue;
      }
      const std::size_t sep = content.find(": ");
      if (sep == std::string_view::npos) {
        diag(lineno, col, "expected '<feature>: <value>' or '- <feature>'");
        continue;
      }
      std::string name(content.substr(0, sep));
      std::string_view vtext = content.substr(sep + 2);
      const int vcol = col + static_cast<int>(sep) + 2;
      FeatureKey key{*unit, *category, name};
      if (!is_valid_name(name)) {
        diag(lineno, col, "invalid feature name");
        continue;
      }
      auto known = schema.find(key);
      const FeatureKind kind = known != schema.end() ? known->second : FeatureKind::Categorical;
      FeatureValue value;
      bool ok = true;
      switch (kind) {
        case FeatureKind::Event:
          diag(lineno, vcol, "event '" + name + "' takes no value");
          ok = false;
          break;
        case FeatureKind::Numeric:
          if (auto d = Decimal::parse(vtext)) {
            value = *d;
          } else {
            diag(lineno, vcol, "'" + std::string(vtext) + "' is not a number");
            ok = false;
          }
          break;
        case FeatureKind::Binary:
          if (vtext == "yes" || vtext == "no") {
            value = vtext == "yes";
          } else {
            diag(lineno, vcol, "binary value must be yes or no");
            ok = false;
          }
          break;
        case FeatureKind::Categorical:
          if (is_valid_categorical(vtext)) {
            value = std::string(vtext);
          } else {
            diag(lineno, vcol, "invalid categorical value");
            ok = false;
          }
          break;
      }
      if (!ok) continue;
      if (out.events.contains(key) || !out.values.emplace(key, std::move(value)).second) {
        diag(lineno, col, "duplicate feature '" + name + "'");
      }
      continue;
    }
    diag(lineno, 1, "unexpected indentation of " + std::to_string(indent) + " spaces");
  }

  std::sort(out.states.begin(), out.states.end());
  out.states.erase(std::unique(out.states.begin(), out.states.end()), out.states.end());
  if (out.icd && !out.terminal()) {
    diag(0, 0, "ICD categories without a terminal state dropped");
    out.icd.reset();
  }
  if (!structure) {
    result.status = ParseStatus::Malformed;
  } else {
    result.status = result.diagnostics.empty() ? ParseStatus::Ok : ParseStatus::Partial;
  }
  return result;
}

std::vector<Diagnostic> check_input_text(std::string_view text) {
  std::vector<Diagnostic> diags;
  auto diag = [&](int line, int col, std::string msg) { diags.push_back({line, col, std::move(msg)}); };
  bool truncated = false;
  auto lines = split_lines(text, truncated);
  if (truncated) diag(static_cast<int>(lines.size()), 1, "missing final newline");
  if (lines.empty() || lines[0] != "Patient:") {
    diag(1, 1, "input must start with 'Patient:'");
  }
  enum class Block { None, Patient, Unit } block = Block::None;
  bool in_category = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int lineno = static_cast<int>(i) + 1;
    std::string_view line = lines[i];
    const std::size_t indent = leading_spaces(line);
    std::string_view content = line.substr(indent);
    const int col = static_cast<int>(indent) + 1;
    if (content.empty()) {
      diag(lineno, 1, "blank line");
      continue;
    }
    if (indent == 0) {
      in_category = false;
      if (content == "Patient:") {
        block = i == 0 ? Block::Patient : Block::None;
        if (i != 0) diag(lineno, 1, "'Patient:' must be the first line");
      } else if (content.back() == ':' && parse_unit(content.substr(0, content.size() - 1))) {
        block = Block::Unit;
      } else {
        block = Block::None;
        diag(lineno, 1, "expected 'Patient:' or a unit heading");
      }
      continue;
    }
    if (block == Block::None) {
      diag(lineno, 1, "line outside a block");
      continue;
    }
    if (indent == 2) {
      in_category = false;
      const std::size_t sep = content.find(": ");
      if (block == Block::Patient) {
        if (sep == std::string_view::npos || sep == 0) diag(lineno, col, "expected '<attribute>: <value>'");
        continue;
      }
      if (sep == std::string_view::npos) {
        if (content.back() == ':' && is_valid_name(content.substr(0, content.size() - 1))) {
          in_category = true;
        } else {
          diag(lineno, col, "expected a category heading or unit-level key");
        }
        continue;
      }
      const std::string_view key = content.substr(0, sep);
      const std::string_view value = content.substr(sep + 2);
      const int vcol = col + static_cast<int>(sep) + 2;
      if (key == "LOS") {
        if (!value.ends_with(" hours") || !parse_nonneg_int(value.substr(0, value.size() - 6))) {
          diag(lineno, vcol, "LOS must read '<n> hours'");
        }
      } else if (key == "Admitted" || key == "Discharged" || key == "Died") {
        for (auto part : split(value, ", ")) {
          if (!parse_nonneg_int(part)) {
            diag(lineno, vcol, "expected comma-separated hours");
            break;
          }
        }
      } else {
        diag(lineno, col, "unknown unit-level key '" + std::string(key) + "'");
      }
      continue;
    }
    if (indent == 4) {
      if (block != Block::Unit || !in_category) {
        diag(lineno, col, "feature line outside a category");
        continue;
      }
      const std::size_t sep = content.find(": ");
      if (sep == std::string_view::npos || !is_valid_name(content.substr(0, sep))) {
        diag(lineno, col, "expected '<feature>: <series>'");
        continue;
      }
      const std::string_view body = content.substr(sep + 2);
      if (!parse_series(body, true) && !parse_series(body, false)) {
        diag(lineno, col + static_cast<int>(sep) + 2, "malformed series");
      }
      continue;
    }
    diag(lineno, 1, "unexpected indentation of " + std::to_string(indent) + " spaces");
  }
  return diags;
}

PatientRecord apply_output(const PatientRecord& record, int t, const TimestepOutput& out,
                           std::optional<int> horizon) {
  if (t != record.total_hours) {
    throw RecordError("apply_output at hour " + std::to_string(t) + " but record ends at " +
                      std::to_string(record.total_hours));
  }
  if (horizon && t + 1 > *horizon) {
    throw RecordError("hour " + std::to_string(t + 1) + " beyond horizon " + std::to_string(*horizon));
  }
  const bool death = out.has_state(StateKind::Death);
  const bool discharge = out.has_state(StateKind::EDDischarge) ||
                         out.has_state(StateKind::HospDischarge) ||
                         out.has_state(StateKind::ICUDischarge);
  if (death && discharge) throw RecordError("conflicting terminal states: death and discharge");

  PatientRecord next = record;
  const int hour = t + 1;
  next.total_hours = hour;
  auto write = [&](const FeatureKey& key, FeatureKind kind, FeatureValue value) {
    auto& features = next.units[key.unit].categories[key.category].features;
    auto [it, inserted] = features.try_emplace(key.feature, FeatureSeries{kind, {}});
    if (!inserted && it->second.kind != kind) {
      throw RecordError("feature '" + key.feature + "' is " + std::string(kind_name(it->second.kind)) +
                        ", output carries " + std::string(kind_name(kind)));
    }
    it->second.entries.push_back({hour, std::move(value)});
  };
  for (const auto& key : out.events) write(key, FeatureKind::Event, std::monostate{});
  for (const auto& [key, value] : out.values) {
    FeatureKind kind = FeatureKind::Categorical;
    if (std::holds_alternative<Decimal>(value)) kind = FeatureKind::Numeric;
    if (std::holds_alternative<bool>(value)) kind = FeatureKind::Binary;
    write(key, kind, value);
  }
  for (StateKind k : out.states) next.state_events.push_back({hour, k});
  // Death stays last among same-hour events.
  std::stable_sort(next.state_events.begin(), next.state_events.end(),
                   [](const StateEvent& a, const StateEvent& b) {
                     if (a.hour != b.hour) return a.hour < b.hour;
                     return a.kind != StateKind::Death && b.kind == StateKind::Death;
                   });
  for (Unit unit : kAllUnits) {
    auto los = out.los.find(unit);
    if (los != out.los.end()) {
      next.units[unit].los_remaining = los->second;
    } else if (auto ud = next.units.find(unit); ud != next.units.end()) {
      ud->second.los_remaining.reset();
    }
  }
  if (out.icd) next.icd_categories = *out.icd;
  return next;
}

int noisy_los(int hours, double pct, Rng& rng) {
  const int lo = static_cast<int>(std::ceil(hours * (1.0 - pct) - 1e-9));
  const int hi = static_cast<int>(std::floor(hours * (1.0 + pct) + 1e-9));
  return static_cast<int>(uniform_int(rng, std::max(0, lo), std::max(0, hi)));
}

std::optional<std::string> render_los_token(int hours, LosMode mode, double pct, Rng* rng) {
  if (hours < 0) throw std::invalid_argument("LOS hours must be non-negative");
  switch (mode) {
    case LosMode::Exact: return los_line(hours);
    case LosMode::Noisy:
      if (!rng) throw std::invalid_argument("noisy LOS needs an rng");
      return los_line(noisy_los(hours, pct, *rng));
    case LosMode::Dropped: return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace ehrtraj
