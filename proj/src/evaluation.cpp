#include "ehrtraj/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "ehrtraj/training.hpp"

namespace ehrtraj {

FeatureStats FeatureStats::fit(const std::vector<PatientRecord>& train) {
  FeatureStats s;
  s.schema = schema_of(train);
  std::map<FeatureKey, std::size_t> present;
  std::map<FeatureKey, std::pair<double, std::size_t>> sums;
  std::map<FeatureKey, std::map<std::string, std::size_t>> counts;
  for (const auto& rec : train) {
    for (int h = 1; h <= rec.total_hours; ++h) {
      const auto label = label_at(rec, h);
      ++s.labels;
      for (const auto& k : label.recorded_features()) ++present[k];
      for (const auto& [k, v] : label.values) {
        if (const auto* d = std::get_if<Decimal>(&v)) {
          sums[k].first += d->to_double();
          ++sums[k].second;
        } else {
          ++counts[k][render_value(v, true)];
        }
      }
    }
  }
  for (const auto& [k, n] : present) s.freq[k] = static_cast<double>(n) / static_cast<double>(s.labels);
  for (const auto& [k, p] : sums) s.mean[k] = p.first / static_cast<double>(p.second);
  for (const auto& [k, c] : counts) {
    // ties go to the lexicographically smallest value (map order)
    auto best = c.begin();
    for (auto it = c.begin(); it != c.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    s.mode[k] = best->first;
  }
  return s;
}

TimestepOutput StatisticBaseline::sample(Rng& rng) const {
  TimestepOutput out;
  for (const auto& [k, f] : stats_.freq) {
    if (!bernoulli(rng, f)) continue;
    const auto kind = stats_.schema.count(k) ? stats_.schema.at(k) : FeatureKind::Event;
    switch (kind) {
      case FeatureKind::Event: out.events.insert(k); break;
      case FeatureKind::Numeric:
        out.values[k] = Decimal::from_double(stats_.mean.count(k) ? stats_.mean.at(k) : 0.0);
        break;
      case FeatureKind::Categorical:
        if (stats_.mode.count(k)) out.values[k] = stats_.mode.at(k);
        break;
      case FeatureKind::Binary:
        out.values[k] = stats_.mode.count(k) && stats_.mode.at(k) == "true";
        break;
    }
  }
  return out;
}

StepPrediction StatisticBaseline::predict(const PatientRecord&, int, Rng& rng) {
  return {render_output(sample(rng)), {}};
}

void CaseSeries::add(const TimestepOutput& out, int hour, bool is_prediction, const NormStats& norm,
                     UnknownFeaturePolicy unknown, const std::function<bool(const FeatureKey&)>& keep) {
  auto& features = is_prediction ? pred_features : true_features;
  auto& numeric = is_prediction ? pred_numeric : true_numeric;
  auto& categorical = is_prediction ? pred_categorical : true_categorical;
  for (const auto& k : out.recorded_features()) {
    if (keep && !keep(k)) continue;
    features.insert(k.to_string());
  }
  for (const auto& [k, v] : out.values) {
    if (keep && !keep(k)) continue;
    const std::string key = k.to_string();
    if (const auto* d = std::get_if<Decimal>(&v)) {
      const auto n = normalize(norm, key, d->to_double(), unknown);
      if (n) numeric[key].push_back({hour, *n});
    } else {
      categorical[key].push_back({hour, render_value(v, true)});
    }
  }
}

CaseScores score_case(const CaseSeries& c, const ScoreOptions& opts, F1Accumulator& f1, MetricReport& report) {
  F1Accumulator own;
  own.add(c.pred_features, c.true_features);
  f1.add(c.pred_features, c.true_features);
  CaseScores scores;
  scores.f1 = own.result().micro;

  double mae_sum = 0.0;
  long mae_n = 0;
  double exact = 0.0;
  long exact_n = 0;
  static const std::vector<TimedValue<double>> no_num;
  static const std::vector<TimedValue<std::string>> no_cat;
  for (const auto& [key, truths] : c.true_numeric) {
    const auto it = c.pred_numeric.find(key);
    const auto& preds = it == c.pred_numeric.end() ? no_num : it->second;
    for (const auto& tv : truths) {
      const auto e = modified_mae(preds, tv, opts.tol_hours, opts.mode);
      if (!e) continue;
      report.mae.add(key, *e);
      mae_sum += *e;
      ++mae_n;
      exact += *e < 1e-12 ? 1.0 : 0.0;
      ++exact_n;
    }
  }
  for (const auto& [key, truths] : c.true_categorical) {
    const auto it = c.pred_categorical.find(key);
    const auto& preds = it == c.pred_categorical.end() ? no_cat : it->second;
    for (const auto& tv : truths) {
      const auto a = modified_accuracy(preds, tv, opts.tol_hours, opts.mode);
      if (!a) continue;
      report.cat_acc.add(key, *a);
      exact += *a;
      ++exact_n;
    }
  }
  if (mae_n) scores.mae = mae_sum / static_cast<double>(mae_n);
  if (exact_n) {
    const double prev_n = report.extra.count("value_n") ? report.extra.at("value_n") : 0.0;
    const double prev = report.value_acc.value_or(0.0) * prev_n;
    report.extra["value_n"] = prev_n + static_cast<double>(exact_n);
    report.value_acc = (prev + exact) / (prev_n + static_cast<double>(exact_n));
  }
  return scores;
}

MetricReport evaluate_next_step(const std::vector<PatientRecord>& cohort,
                                const std::vector<std::string>& patient_ids, StepPredictor& predictor,
                                const NormStats& norm, const FeatureSchema& schema, const NextStepOptions& opts) {
  MetricReport report;
  report.mode = std::string(match_mode_name(opts.score.mode));
  Rng rng = child_rng(opts.seed, 0);
  const auto tps = eval_timepoints(cohort, patient_ids, opts.max_cases, rng);
  F1Accumulator f1;
  std::vector<double> f1_scores, mae_scores;
  Rng gen_rng = child_rng(opts.seed, 1);
  for (const auto& tp : tps) {
    const auto& rec = cohort[tp.patient];
    const auto view = inference_view(rec, tp.t);
    const auto pred = predictor.predict(view, tp.t, gen_rng);
    report.add_tokens(pred.counts);
    const auto parsed = parse_output(pred.text, schema);
    const auto truth = label_at(rec, tp.t + 1);
    CaseSeries c;
    c.add(parsed.output, tp.t + 1, true, norm, opts.score.unknown);
    c.add(truth, tp.t + 1, false, norm, opts.score.unknown);
    const auto s = score_case(c, opts.score, f1, report);
    f1_scores.push_back(s.f1);
    if (s.mae) mae_scores.push_back(*s.mae);
  }
  report.events = f1.result();
  Rng boot = child_rng(opts.seed, 2);
  if (!f1_scores.empty()) report.f1_ci = bootstrap_ci(f1_scores, opts.level, opts.bootstrap_resamples, boot);
  if (!mae_scores.empty()) report.mae_ci = bootstrap_ci(mae_scores, opts.level, opts.bootstrap_resamples, boot);
  return report;
}

}  // namespace ehrtraj
