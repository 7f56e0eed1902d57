#include "ehrtraj/tasks.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace ehrtraj {

const std::vector<TaskSpec>& task_catalog() {
  static const std::vector<TaskSpec> tasks = {
      {"ed-vital-signs", "ED Vital Signs", Unit::ED, TaskKind::Forecast, "Vital Signs", 1, 24},
      {"ed-admission", "ED Admission", Unit::ED, TaskKind::Admission, "", 0, 0},
      {"ed-discharge-diagnosis", "ED Discharge Diagnosis", Unit::ED, TaskKind::Diagnosis, "", 0, 1},
      {"hospital-medications", "Hospital Medications", Unit::Hospital, TaskKind::Forecast, "Prescriptions", 1, 24},
      {"hospital-lab-values", "Hospital Lab Values", Unit::Hospital, TaskKind::Forecast, "Lab Results", 1, 24},
      {"hospital-discharge-diagnosis", "Hospital Discharge Diagnosis", Unit::Hospital, TaskKind::Diagnosis, "", 0, 1},
      {"icu-vital-signs", "ICU Vital Signs", Unit::ICU, TaskKind::Forecast, "RoutineVitalSigns", 1, 24},
      {"icu-inputs", "ICU Inputs", Unit::ICU, TaskKind::Forecast, "Inputs", 1, 24},
      {"icu-imminent-mortality", "ICU Imminent Mortality", Unit::ICU, TaskKind::Mortality, "", 1, 24},
      {"icu-imminent-discharge", "ICU Imminent Discharge", Unit::ICU, TaskKind::Discharge, "", 1, 72},
  };
  return tasks;
}

std::optional<TaskSpec> find_task(std::string_view name) {
  for (const auto& t : task_catalog()) {
    if (t.name == name) return t;
  }
  return std::nullopt;
}

std::vector<std::string> task_names() {
  std::vector<std::string> out;
  for (const auto& t : task_catalog()) out.push_back(t.name);
  return out;
}

namespace {

std::vector<StateKind> states_at(const PatientRecord& r, int hour) {
  std::vector<StateKind> out;
  for (const auto& e : r.state_events) {
    if (e.hour == hour) out.push_back(e.kind);
  }
  return out;
}

bool has_state_in(const PatientRecord& r, StateKind kind, int from_excl, int to_incl) {
  for (const auto& e : r.state_events) {
    if (e.kind == kind && e.hour > from_excl && e.hour <= to_incl) return true;
  }
  return false;
}

std::optional<UnitInterval> closed_interval(const PatientRecord& r, Unit unit) {
  for (const auto& iv : unit_intervals(r)) {
    if (iv.unit == unit && iv.end) return iv;
  }
  return std::nullopt;
}

bool binary_kind(TaskKind k) {
  return k == TaskKind::Admission || k == TaskKind::Mortality || k == TaskKind::Discharge;
}

std::set<StateKind> unit_exit(Unit unit) {
  switch (unit) {
    case Unit::ED: return {StateKind::EDDischarge, StateKind::Death};
    case Unit::Hospital: return {StateKind::HospDischarge, StateKind::Death};
    case Unit::ICU: return {StateKind::ICUDischarge, StateKind::Death};
  }
  return {};
}

bool case_label(const TaskSpec& task, const PatientRecord& r, int t0) {
  const int lo = t0 + task.gap_hours;
  const int hi = lo + task.window_hours;
  switch (task.kind) {
    case TaskKind::Admission: return has_state_in(r, StateKind::HospAdmit, -1, r.total_hours);
    case TaskKind::Mortality: return has_state_in(r, StateKind::Death, lo, hi);
    case TaskKind::Discharge: return has_state_in(r, StateKind::ICUDischarge, lo, hi);
    default: return false;
  }
}

template <typename V>
void shuffle(std::vector<V>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1))]);
  }
}

}  // namespace

std::vector<TaskCase> task_cases(const std::vector<PatientRecord>& cohort,
                                 const std::vector<std::string>& patient_ids, const TaskSpec& task,
                                 std::size_t max_cases, Rng& rng) {
  const std::set<std::string> wanted(patient_ids.begin(), patient_ids.end());
  std::vector<TaskCase> all;
  for (std::size_t p = 0; p < cohort.size(); ++p) {
    const auto& r = cohort[p];
    if (!wanted.count(r.patient_id)) continue;
    const auto iv = closed_interval(r, task.unit);
    if (!iv) continue;
    const int end = *iv->end;
    switch (task.kind) {
      case TaskKind::Forecast: {
        const int last = end - task.gap_hours - 1;
        if (last < iv->start) break;
        const int t0 = static_cast<int>(uniform_int(rng, iv->start, last));
        all.push_back({p, t0, std::min(t0 + task.gap_hours + task.window_hours, end), false});
        break;
      }
      case TaskKind::Admission:
        all.push_back({p, iv->start, end, case_label(task, r, iv->start)});
        break;
      case TaskKind::Diagnosis:
        if (end >= 1 && is_stay_terminal(states_at(r, end))) all.push_back({p, end - 1, end, false});
        break;
      case TaskKind::Mortality:
      case TaskKind::Discharge:
        for (int t0 = iv->start; t0 <= end - task.gap_hours - 1; ++t0) {
          all.push_back({p, t0, t0 + task.gap_hours + task.window_hours, case_label(task, r, t0)});
        }
        break;
    }
  }
  if (!binary_kind(task.kind)) {
    shuffle(all, rng);
    if (all.size() > max_cases) all.resize(max_cases);
    return all;
  }
  std::vector<TaskCase> pos, neg;
  for (const auto& c : all) (c.positive ? pos : neg).push_back(c);
  shuffle(pos, rng);
  shuffle(neg, rng);
  const std::size_t k = std::min({max_cases / 2, pos.size(), neg.size()});
  std::vector<TaskCase> out(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(k));
  out.insert(out.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(k));
  shuffle(out, rng);
  return out;
}

std::string outcome_target(const TaskSpec& task, const PatientRecord& record, const TaskCase& c) {
  if (task.kind == TaskKind::Diagnosis) {
    std::string s;
    for (const auto& l : record.icd_categories) s += (s.empty() ? "" : ";") + l;
    return "ICD categories: " + (s.empty() ? std::string("none") : s) + "\n";
  }
  if (task.kind == TaskKind::Forecast) throw std::invalid_argument(task.name + " has no single-step outcome");
  return std::string("Outcome: ") + (c.positive ? "yes" : "no") + "\n";
}

OutcomeAnswer parse_outcome(std::string_view text) {
  OutcomeAnswer a;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
    if (line == "Outcome: yes") a.positive = true;
    if (line == "Outcome: no") a.positive = false;
    constexpr std::string_view icd = "ICD categories: ";
    if (line.substr(0, icd.size()) == icd) {
      std::set<std::string> labels;
      std::string_view rest = line.substr(icd.size());
      if (rest != "none") {
        std::size_t s = 0;
        while (s <= rest.size()) {
          std::size_t e = rest.find(';', s);
          if (e == std::string_view::npos) e = rest.size();
          if (e > s) labels.emplace(rest.substr(s, e - s));
          s = e + 1;
        }
      }
      a.icd = labels;
    }
    pos = nl + 1;
  }
  return a;
}

std::vector<PathwayExample> pathway_task_pool(const std::vector<PatientRecord>& cohort, const TaskSpec& task) {
  std::vector<PathwayExample> pool;
  for (std::size_t p = 0; p < cohort.size(); ++p) {
    const auto iv = closed_interval(cohort[p], task.unit);
    if (!iv) continue;
    for (int t = iv->start; t < *iv->end; ++t) pool.push_back({{p, t}, std::nullopt, 1.0});
  }
  return pool;
}

std::vector<PathwayExample> outcome_task_pool(const std::vector<PatientRecord>& cohort, const TaskSpec& task,
                                              std::size_t max_cases, Rng& rng) {
  std::vector<std::string> ids;
  for (const auto& r : cohort) ids.push_back(r.patient_id);
  std::vector<PathwayExample> pool;
  for (const auto& c : task_cases(cohort, ids, task, max_cases, rng)) {
    pool.push_back({{c.patient, c.t0}, outcome_target(task, cohort[c.patient], c), 1.0});
  }
  return pool;
}

TaskRun run_task(const std::vector<PatientRecord>& cohort, const std::vector<std::string>& patient_ids,
                 const TaskSpec& task, StepPredictor& predictor, const NormStats& norm,
                 const FeatureSchema& schema, const TaskOptions& opts) {
  TaskRun run;
  MetricReport& report = run.report;
  report.mode = std::string(match_mode_name(opts.score.mode));
  Rng case_rng = child_rng(opts.seed, 0);
  const auto cases = task_cases(cohort, patient_ids, task, opts.max_cases, case_rng);

  int admission_cap = opts.admission_step_cap;
  if (task.kind == TaskKind::Admission && admission_cap <= 0) {
    for (const auto& c : cases) admission_cap = std::max(admission_cap, c.window_end - c.t0);
    admission_cap = std::max(admission_cap, 1);
  }

  F1Accumulator f1;
  std::vector<double> f1_scores, mae_scores, correct_scores;
  long correct = 0, converged = 0, exact_sets = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    const auto& rec = cohort[c.patient];
    Rng rng = child_rng(opts.seed, 1000 + i);

    if (task.kind == TaskKind::Diagnosis || opts.direct_outcome) {
      auto view = inference_view(rec, c.t0);
      if (task.kind == TaskKind::Diagnosis) view.units[task.unit].los_remaining = c.window_end - c.t0;
      const auto pred = predictor.predict(view, c.t0, rng);
      report.add_tokens(pred.counts);
      std::set<std::string> pred_icd;
      std::optional<bool> answer;
      if (opts.direct_outcome) {
        const auto a = parse_outcome(pred.text);
        if (a.icd) pred_icd = *a.icd;
        answer = a.positive;
      } else {
        const auto parsed = parse_output(pred.text, schema);
        if (parsed.output.icd) pred_icd = *parsed.output.icd;
      }
      if (task.kind == TaskKind::Diagnosis) {
        std::set<std::string> p, t;
        for (const auto& l : pred_icd) p.insert("icd:" + l);
        for (const auto& l : rec.icd_categories) t.insert("icd:" + l);
        F1Accumulator own;
        own.add(p, t);
        f1.add(p, t);
        f1_scores.push_back(own.result().micro);
        exact_sets += pred_icd == rec.icd_categories ? 1 : 0;
      } else {
        const bool ok = answer && *answer == c.positive;
        correct += ok ? 1 : 0;
        correct_scores.push_back(ok ? 1.0 : 0.0);
      }
      continue;
    }

    SimConfig sc;
    sc.retries = opts.retries;
    sc.schema = schema;
    switch (task.kind) {
      case TaskKind::Forecast:
        sc.max_steps = task.gap_hours + task.window_hours;
        sc.stop_on = unit_exit(task.unit);
        break;
      case TaskKind::Admission:
        sc.max_steps = admission_cap;
        sc.stop_on = {StateKind::EDDischarge, StateKind::Death};
        break;
      case TaskKind::Mortality:
        sc.max_steps = task.gap_hours + task.window_hours;
        sc.stop_on = {StateKind::Death, StateKind::HospDischarge};
        break;
      case TaskKind::Discharge:
        sc.max_steps = task.gap_hours + task.window_hours;
        sc.stop_on = {StateKind::ICUDischarge, StateKind::Death};
        break;
      case TaskKind::Diagnosis: break;
    }
    auto traj = simulate(rec, c.t0, predictor, sc, rng);
    report.add_tokens(traj.first_counts);
    converged += traj.terminal == Terminal::Converged ? 1 : 0;

    if (task.kind == TaskKind::Forecast) {
      const int lo = c.t0 + task.gap_hours;
      auto keep = [&](const FeatureKey& k) { return k.unit == task.unit && k.category == task.category; };
      CaseSeries cs;
      for (int h = lo + 1; h <= c.window_end; ++h) {
        cs.add(label_at(rec, h), h, false, norm, opts.score.unknown, keep);
      }
      CaseSeries near;
      for (const auto& s : traj.steps) {
        if (s.hour > lo && s.hour <= c.window_end) {
          cs.add(s.output, s.hour, true, norm, opts.score.unknown, keep);
        } else {
          near.add(s.output, s.hour, true, norm, opts.score.unknown, keep);
        }
      }
      // Values just outside the window may still match within tolerance.
      for (auto& [k, v] : near.pred_numeric) {
        auto& dst = cs.pred_numeric[k];
        dst.insert(dst.end(), v.begin(), v.end());
      }
      for (auto& [k, v] : near.pred_categorical) {
        auto& dst = cs.pred_categorical[k];
        dst.insert(dst.end(), v.begin(), v.end());
      }
      const auto s = score_case(cs, opts.score, f1, report);
      f1_scores.push_back(s.f1);
      if (s.mae) mae_scores.push_back(*s.mae);
    } else {
      bool predicted = false;
      for (const auto& s : traj.steps) {
        const bool in_window = s.hour <= c.window_end;
        if (task.kind == TaskKind::Admission && s.output.has_state(StateKind::HospAdmit)) predicted = true;
        if (task.kind == TaskKind::Mortality && in_window && s.output.has_state(StateKind::Death)) predicted = true;
        if (task.kind == TaskKind::Discharge && in_window && s.output.has_state(StateKind::ICUDischarge)) {
          predicted = true;
        }
      }
      const bool ok = predicted == c.positive;
      correct += ok ? 1 : 0;
      correct_scores.push_back(ok ? 1.0 : 0.0);
    }
    run.trajectories.push_back(std::move(traj));
  }

  report.events = f1.result();
  const double n = static_cast<double>(cases.size());
  if (!cases.empty()) {
    if (binary_kind(task.kind)) {
      report.extra["accuracy"] = static_cast<double>(correct) / n;
      long pos = 0;
      for (const auto& c : cases) pos += c.positive ? 1 : 0;
      report.extra["positives"] = static_cast<double>(pos);
      report.extra["negatives"] = n - static_cast<double>(pos);
    }
    if (task.kind == TaskKind::Diagnosis) report.extra["exact_match"] = static_cast<double>(exact_sets) / n;
    if (!run.trajectories.empty()) {
      report.extra["converged_rate"] = static_cast<double>(converged) / static_cast<double>(run.trajectories.size());
    }
  }
  Rng boot = child_rng(opts.seed, 2);
  if (!f1_scores.empty()) report.f1_ci = bootstrap_ci(f1_scores, opts.level, opts.bootstrap_resamples, boot);
  if (!mae_scores.empty()) report.mae_ci = bootstrap_ci(mae_scores, opts.level, opts.bootstrap_resamples, boot);
  if (!correct_scores.empty()) {
    const auto ci = bootstrap_ci(correct_scores, opts.level, opts.bootstrap_resamples, boot);
    report.extra["accuracy_ci_lo"] = ci.lo;
    report.extra["accuracy_ci_hi"] = ci.hi;
  }
  return run;
}

}  // namespace ehrtraj
