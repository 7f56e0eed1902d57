#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ehrtraj/codec.hpp"
#include "ehrtraj/io.hpp"
#include "ehrtraj/metrics.hpp"
#include "ehrtraj/model.hpp"

namespace ehrtraj {

struct StepPrediction {
  std::string text;
  TokenCounts counts;
};

/// Produces the output text for hour t + 1 of a record that ends at t.
class StepPredictor {
 public:
  virtual ~StepPredictor() = default;
  virtual StepPrediction predict(const PatientRecord& record, int t, Rng& rng) = 0;
};

/// Trained pathway model (plus summarizer for summary variants). Summaries
/// are recomputed from the current record on every call.
class ModelPredictor : public StepPredictor {
 public:
  ModelPredictor(const PathwayModel& model, const Summarizer* summarizer, DecodeConfig decode);
  StepPrediction predict(const PatientRecord& record, int t, Rng& rng) override;

 private:
  const PathwayModel& model_;
  const Summarizer* summarizer_;
  DecodeConfig decode_;
};

struct SimConfig {
  int max_steps = 24;
  /// Stop once a step carries any of these states; empty means "the stay
  /// ended" (death, hospital discharge or ED discharge home).
  std::set<StateKind> stop_on;
  int retries = 3;  // extra samples after a malformed or unusable output
  std::optional<int> horizon;
  FeatureSchema schema;  // kinds of known features for parsing
};

enum class Terminal { Converged, StepCap, ParseFailure };
std::string_view terminal_name(Terminal t);

struct SimStep {
  int hour = 0;
  TimestepOutput output;
  std::string raw_text;
  ParseStatus status = ParseStatus::Ok;
  std::vector<Diagnostic> diagnostics;
  int attempts = 1;
};

struct Trajectory {
  std::string patient_id;
  int t0 = 0;
  std::vector<SimStep> steps;
  Terminal terminal = Terminal::StepCap;
  std::optional<StateKind> terminal_kind;
  PatientRecord record;  // history up to t0 followed by the simulated hours
  TokenCounts first_counts;

  Json to_json() const;
};

/// Rolls the record forward from t0 one hour at a time. The starting record
/// carries no LOS; afterwards each unit's LOS is whatever the model predicted
/// in the previous step.
Trajectory simulate(const PatientRecord& record, int t0, StepPredictor& predictor, const SimConfig& cfg,
                    Rng& rng);

void write_trajectories(const std::filesystem::path& path, const std::vector<Trajectory>& trajectories);

}  // namespace ehrtraj
