#include "ehrtraj/simulator.hpp"

#include <fstream>
#include <stdexcept>

#include "ehrtraj/training.hpp"

namespace ehrtraj {

ModelPredictor::ModelPredictor(const PathwayModel& model, const Summarizer* summarizer, DecodeConfig decode)
    : model_(model), summarizer_(summarizer), decode_(decode) {
  if (uses_summaries(model_.config().variant) && !summarizer_) {
    throw std::invalid_argument("summary variants need a summarizer");
  }
}

StepPrediction ModelPredictor::predict(const PatientRecord& record, int t, Rng& rng) {
  std::optional<SummaryState> summaries;
  if (uses_summaries(model_.config().variant)) summaries = summarizer_->summarize_record(record, t);
  const auto input = assemble_pathway_input(record, t, model_.config(), model_.vocab(),
                                            summaries ? &*summaries : nullptr);
  const auto gen = generate(model_.net(), model_.vocab(), input.seq, decode_, rng);
  return {gen.text, input.counts};
}

std::string_view terminal_name(Terminal t) {
  switch (t) {
    case Terminal::Converged: return "converged";
    case Terminal::StepCap: return "step_cap";
    case Terminal::ParseFailure: return "parse_failure";
  }
  return "?";
}

namespace {

std::optional<StateKind> stop_kind(const TimestepOutput& out, const std::set<StateKind>& stop_on) {
  if (stop_on.empty()) {
    if (!out.terminal()) return std::nullopt;
    if (out.has_state(StateKind::Death)) return StateKind::Death;
    if (out.has_state(StateKind::HospDischarge)) return StateKind::HospDischarge;
    return StateKind::EDDischarge;
  }
  // Death wins over a same-hour discharge.
  if (stop_on.count(StateKind::Death) && out.has_state(StateKind::Death)) return StateKind::Death;
  for (StateKind k : out.states) {
    if (stop_on.count(k)) return k;
  }
  return std::nullopt;
}

}  // namespace

Trajectory simulate(const PatientRecord& record, int t0, StepPredictor& predictor, const SimConfig& cfg,
                    Rng& rng) {
  if (cfg.max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  if (t0 < 0 || t0 > record.total_hours) throw std::out_of_range("simulation start outside record");
  Trajectory traj;
  traj.patient_id = record.patient_id;
  traj.t0 = t0;
  traj.record = inference_view(record, t0);
  int t = t0;
  for (int k = 0; k < cfg.max_steps; ++k) {
    SimStep step;
    step.hour = t + 1;
    bool ok = false;
    for (int attempt = 0; attempt <= cfg.retries && !ok; ++attempt) {
      step.attempts = attempt + 1;
      auto pred = predictor.predict(traj.record, t, rng);
      if (k == 0 && attempt == 0) traj.first_counts = pred.counts;
      step.raw_text = std::move(pred.text);
      auto parsed = parse_output(step.raw_text, cfg.schema);
      step.status = parsed.status;
      step.diagnostics = std::move(parsed.diagnostics);
      if (parsed.status == ParseStatus::Malformed) continue;
      try {
        traj.record = apply_output(traj.record, t, parsed.output, cfg.horizon);
        step.output = std::move(parsed.output);
        ok = true;
      } catch (const std::exception& e) {
        step.diagnostics.push_back({0, 0, e.what()});
      }
    }
    if (!ok) {
      traj.steps.push_back(std::move(step));
      traj.terminal = Terminal::ParseFailure;
      return traj;
    }
    ++t;
    const auto kind = stop_kind(step.output, cfg.stop_on);
    traj.steps.push_back(std::move(step));
    if (kind) {
      traj.terminal = Terminal::Converged;
      traj.terminal_kind = kind;
      return traj;
    }
  }
  traj.terminal = Terminal::StepCap;
  return traj;
}

Json Trajectory::to_json() const {
  Json j;
  j["patient_id"] = patient_id;
  j["t0"] = t0;
  j["terminal"] = std::string(terminal_name(terminal));
  j["terminal_kind"] = terminal_kind ? Json(std::string(state_name(*terminal_kind))) : Json(nullptr);
  Json steps_j = Json::array();
  for (const auto& s : steps) {
    Json d = Json::array();
    for (const auto& diag : s.diagnostics) {
      d.push_back({{"line", diag.line}, {"column", diag.column}, {"message", diag.message}});
    }
    steps_j.push_back({{"hour", s.hour},
                       {"status", std::string(status_name(s.status))},
                       {"attempts", s.attempts},
                       {"output", ehrtraj::to_json(s.output)},
                       {"raw_text", s.raw_text},
                       {"diagnostics", d}});
  }
  j["steps"] = steps_j;
  return j;
}

void write_trajectories(const std::filesystem::path& path, const std::vector<Trajectory>& trajectories) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : trajectories) os << t.to_json().dump() << '\n';
}

}  // namespace ehrtraj
