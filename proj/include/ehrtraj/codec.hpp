#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ehrtraj/random.hpp"
#include "ehrtraj/record.hpp"
#include "ehrtraj/timestep.hpp"

namespace ehrtraj {

// Text grammar (see FORMATS.md for the full description).
//
// Input side, hours are relative to the current hour t ("5" = five hours ago):
//
//   Patient:
//     Age: 57
//     Elapsed: 14 hours
//   ICU:
//     LOS: 23 hours
//     Admitted: 6
//     Vital Signs:
//       Heart Rate: 10-4: 82, 2:80
//       Norepinephrine: 6-1
//
// Output side, one hour of sparse content:
//
//   ICU:
//     LOS: 22 hours
//     Vital Signs:
//       Heart Rate: 82.0
//       - Norepinephrine

inline constexpr std::string_view kEmptyOutputText = "(none)\n";

struct RenderConfig {
  std::optional<int> window_hours;  // nullopt renders the full history
  bool include_los = true;
  double los_noise_pct = 0.0;       // applied only when an rng is supplied
};

struct RenderedSection {
  Unit unit = Unit::ED;
  std::string category;
  std::string text;  // indented category block as it appears in the full text
};

struct RenderedUnit {
  Unit unit = Unit::ED;
  std::string preamble;  // unit heading plus LOS and state-history lines
  std::vector<RenderedSection> sections;
};

struct RenderedInput {
  std::string header;
  std::vector<RenderedUnit> units;

  std::string text() const;
  /// Header and unit preambles without any category blocks.
  std::string skeleton() const;
};

RenderedInput render_input(const PatientRecord& record, int t, const RenderConfig& cfg,
                           Rng* rng = nullptr);

/// Standalone block for one (unit, category), e.g. "ICU / Vital Signs:\n  ...".
/// Empty string when the category has no entries in the window.
std::string render_section(const PatientRecord& record, int t, Unit unit,
                           const std::string& category, std::optional<int> window_hours);

/// (unit, category) pairs with at least one entry at or before t.
std::vector<std::pair<Unit, std::string>> sections_at(const PatientRecord& record, int t);

/// Series body for one feature, e.g. "10-4: 82, 2:80".
std::string render_series(const FeatureSeries& series, int t, std::optional<int> window_hours);

struct SeriesItem {
  int rel_hour = 0;
  std::optional<std::string> value;  // absent for events
  friend bool operator==(const SeriesItem&, const SeriesItem&) = default;
};

/// Expands a rendered series body into one item per hour, oldest first.
/// Returns nullopt if the body does not follow the grammar.
std::optional<std::vector<SeriesItem>> parse_series(std::string_view body, bool is_event);

std::string render_value(const FeatureValue& value, bool output_side);

std::string render_output(const TimestepOutput& out);

/// Output lines of one section only: "Heart Rate: 82.0\n- Aspirin\n".
std::string render_section_output(const TimestepOutput& out, Unit unit,
                                  const std::string& category);

using FeatureSchema = std::map<FeatureKey, FeatureKind>;

FeatureSchema schema_of(const std::vector<PatientRecord>& records);

enum class ParseStatus { Ok, Partial, Malformed };

struct Diagnostic {
  int line = 0;    // 1-based
  int column = 0;  // 1-based
  std::string message;
};

struct ParseResult {
  ParseStatus status = ParseStatus::Ok;
  TimestepOutput output;
  std::vector<Diagnostic> diagnostics;
};

std::string_view status_name(ParseStatus status);

/// Inverse of render_output. Features missing from the schema are kept as
/// categorical values or events. Lines that cannot be read are dropped with a
/// diagnostic (Partial); text with nothing recoverable is Malformed.
ParseResult parse_output(std::string_view text, const FeatureSchema& schema = {});

/// Grammar check for rendered input text.
std::vector<Diagnostic> check_input_text(std::string_view text);

/// Writes out at absolute hour t + 1 and advances total_hours. Unit LOS values
/// are replaced by the output's LOS (cleared where absent).
PatientRecord apply_output(const PatientRecord& record, int t, const TimestepOutput& out,
                           std::optional<int> horizon = std::nullopt);

enum class LosMode { Exact, Noisy, Dropped };

/// "LOS: H hours"; the noisy form draws uniformly from
/// [ceil((1 - pct) H), floor((1 + pct) H)].
std::optional<std::string> render_los_token(int hours, LosMode mode, double pct, Rng* rng);

int noisy_los(int hours, double pct, Rng& rng);

}  // namespace ehrtraj
