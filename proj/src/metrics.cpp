#include "ehrtraj/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace ehrtraj {

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

NormStats NormStats::fit(const std::vector<PatientRecord>& train) {
  std::map<std::string, std::vector<double>> samples;
  for (const auto& rec : train) {
    for (const auto& [unit, data] : rec.units) {
      for (const auto& [cat, cdata] : data.categories) {
        for (const auto& [name, series] : cdata.features) {
          if (series.kind != FeatureKind::Numeric) continue;
          auto& bucket = samples[FeatureKey{unit, cat, name}.to_string()];
          for (const auto& e : series.entries) bucket.push_back(std::get<Decimal>(e.value).to_double());
        }
      }
    }
  }
  NormStats stats;
  for (auto& [key, vals] : samples) {
    if (vals.empty()) continue;
    stats.ranges[key] = {percentile(vals, 0.01), percentile(vals, 0.99)};
  }
  return stats;
}

Json NormStats::to_json() const {
  Json j = Json::object();
  for (const auto& [k, r] : ranges) j[k] = Json::array({r.first, r.second});
  return j;
}

NormStats NormStats::from_json(const Json& j) {
  NormStats s;
  for (auto it = j.begin(); it != j.end(); ++it) {
    s.ranges[it.key()] = {it.value().at(0).get<double>(), it.value().at(1).get<double>()};
  }
  return s;
}

double normalize(double value, double p1, double p99) {
  if (!(p99 > p1)) return 0.5;
  const double v = std::clamp(value, p1, p99);
  return (v - p1) / (p99 - p1);
}

std::optional<double> normalize(const NormStats& stats, const std::string& key, double value,
                                UnknownFeaturePolicy policy) {
  const auto it = stats.ranges.find(key);
  if (it != stats.ranges.end()) return normalize(value, it->second.first, it->second.second);
  if (policy == UnknownFeaturePolicy::Skip) return std::nullopt;
  return std::clamp(value, 0.0, 1.0);
}

double Confusion::f1() const {
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

void F1Accumulator::add(const std::set<std::string>& pred, const std::set<std::string>& truth) {
  for (const auto& p : pred) {
    auto& c = per_feature_[p];
    if (truth.count(p)) {
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  for (const auto& t : truth) {
    if (!pred.count(t)) ++per_feature_[t].fn;
  }
}

F1Result F1Accumulator::result() const {
  F1Result r;
  r.per_feature = per_feature_;
  Confusion pooled;
  double macro_sum = 0.0;
  for (const auto& [key, c] : per_feature_) {
    pooled.tp += c.tp;
    pooled.fp += c.fp;
    pooled.fn += c.fn;
    macro_sum += c.f1();
  }
  r.micro = pooled.f1();
  if (!per_feature_.empty()) r.macro = macro_sum / static_cast<double>(per_feature_.size());
  return r;
}

F1Result event_f1(const std::vector<std::set<std::string>>& preds,
                  const std::vector<std::set<std::string>>& truths) {
  if (preds.size() != truths.size()) throw std::invalid_argument("event_f1: size mismatch");
  F1Accumulator acc;
  for (std::size_t i = 0; i < preds.size(); ++i) acc.add(preds[i], truths[i]);
  return acc.result();
}

std::string_view match_mode_name(MatchMode mode) {
  return mode == MatchMode::MissingIsMaxError ? "missing_is_max_error" : "matched_only";
}

std::optional<double> modified_mae(std::span<const TimedValue<double>> preds, TimedValue<double> truth,
                                   int tol_hours, MatchMode mode) {
  const auto idx = nearest_match(preds, truth.hour, tol_hours);
  if (!idx) {
    if (mode == MatchMode::MatchedOnly) return std::nullopt;
    return 1.0;
  }
  return std::min(1.0, std::abs(preds[*idx].value - truth.value));
}

std::optional<double> modified_accuracy(std::span<const TimedValue<std::string>> preds,
                                        const TimedValue<std::string>& truth, int tol_hours,
                                        MatchMode mode) {
  const auto idx = nearest_match(preds, truth.hour, tol_hours);
  if (!idx) {
    if (mode == MatchMode::MatchedOnly) return std::nullopt;
    return 0.0;
  }
  return preds[*idx].value == truth.value ? 1.0 : 0.0;
}

void ScoreAccumulator::add(const std::string& feature, double score) {
  auto& slot = per_feature_[feature];
  slot.first += score;
  ++slot.second;
  sum_ += score;
  ++count_;
}

std::optional<double> ScoreAccumulator::micro() const {
  if (count_ == 0) return std::nullopt;
  return sum_ / static_cast<double>(count_);
}

std::optional<double> ScoreAccumulator::macro() const {
  if (per_feature_.empty()) return std::nullopt;
  double s = 0.0;
  for (const auto& [k, v] : per_feature_) s += v.first / static_cast<double>(v.second);
  return s / static_cast<double>(per_feature_.size());
}

int SummaryLayout::slots_for(std::size_t section_tokens) const {
  if (m < 1 || max_section_tokens < 1) throw std::invalid_argument("SummaryLayout needs m, block >= 1");
  const std::size_t block = static_cast<std::size_t>(max_section_tokens);
  const std::size_t blocks = std::max<std::size_t>(1, (section_tokens + block - 1) / block);
  return static_cast<int>(blocks) * m;
}

TokenCounts section_accounting(std::size_t section_tokens, const SummaryLayout& layout) {
  return {section_tokens, static_cast<std::size_t>(layout.slots_for(section_tokens))};
}

double inverse_cdf(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("inverse_cdf of an empty sample");
  const double n = static_cast<double>(sorted.size());
  double k = std::ceil(q * n - 1e-9);
  k = std::clamp(k, 1.0, n);
  return sorted[static_cast<std::size_t>(k) - 1];
}

Interval bootstrap_ci(std::span<const double> scores, double level, std::size_t resamples, Rng& rng) {
  if (scores.empty()) throw std::invalid_argument("bootstrap_ci needs at least one score");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci level must be in (0, 1)");
  const std::size_t n = scores.size();
  std::vector<double> means;

  // n^n without overflow
  bool enumerate = true;
  std::size_t total = 1;
  for (std::size_t i = 0; i < n && enumerate; ++i) {
    if (total > resamples / n) enumerate = false;
    total *= n;
  }
  enumerate = enumerate && total <= resamples;

  if (enumerate) {
    means.reserve(total);
    std::vector<std::size_t> idx(n, 0);
    for (std::size_t r = 0; r < total; ++r) {
      double s = 0.0;
      for (std::size_t i : idx) s += scores[i];
      means.push_back(s / static_cast<double>(n));
      for (std::size_t d = 0; d < n; ++d) {
        if (++idx[d] < n) break;
        idx[d] = 0;
      }
    }
  } else {
    if (resamples == 0) throw std::invalid_argument("bootstrap_ci needs resamples >= 1");
    means.reserve(resamples);
    for (std::size_t r = 0; r < resamples; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        s += scores[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(n) - 1))];
      }
      means.push_back(s / static_cast<double>(n));
    }
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - level) / 2.0;
  return {inverse_cdf(means, alpha), inverse_cdf(means, 1.0 - alpha)};
}

void MetricReport::add_tokens(const TokenCounts& c) {
  ++cases;
  context_tokens_sum += c.context_tokens;
  input_tokens_sum += c.input_tokens;
  context_tokens_max = std::max(context_tokens_max, c.context_tokens);
  input_tokens_max = std::max(input_tokens_max, c.input_tokens);
}

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json interval(const std::optional<Interval>& v) {
  return v ? Json::array({v->lo, v->hi}) : Json(nullptr);
}

std::string fmt(const std::optional<double>& v, int prec = 3) {
  if (!v) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << *v;
  return os.str();
}

}  // namespace

Json MetricReport::to_json() const {
  Json j;
  j["mode"] = mode;
  j["cases"] = cases;
  j["f1_micro"] = cases || !events.per_feature.empty() ? Json(events.micro) : Json(nullptr);
  j["f1_macro"] = opt(events.macro);
  j["f1_micro_ci"] = interval(f1_ci);
  j["mae_micro"] = opt(mae.micro());
  j["mae_macro"] = opt(mae.macro());
  j["mae_micro_ci"] = interval(mae_ci);
  j["cat_acc_micro"] = opt(cat_acc.micro());
  j["cat_acc_macro"] = opt(cat_acc.macro());
  j["value_acc"] = opt(value_acc);
  const double denom = cases ? static_cast<double>(cases) : 1.0;
  j["context_tokens"] = {{"avg", cases ? static_cast<double>(context_tokens_sum) / denom : 0.0},
                         {"max", context_tokens_max}};
  j["input_tokens"] = {{"avg", cases ? static_cast<double>(input_tokens_sum) / denom : 0.0},
                       {"max", input_tokens_max}};
  Json extras = Json::object();
  for (const auto& [k, v] : extra) extras[k] = v;
  j["extra"] = extras;
  return j;
}

std::string MetricReport::table() const {
  std::ostringstream os;
  const double denom = cases ? static_cast<double>(cases) : 1.0;
  os << "mode            " << mode << "\n";
  os << "cases           " << cases << "\n";
  os << "F1 micro/macro  " << fmt(cases ? std::optional<double>(events.micro) : std::nullopt) << " / "
     << fmt(events.macro) << "\n";
  os << "MAE micro/macro " << fmt(mae.micro()) << " / " << fmt(mae.macro()) << "\n";
  os << "Acc micro/macro " << fmt(cat_acc.micro()) << " / " << fmt(cat_acc.macro()) << "\n";
  os << "Value acc       " << fmt(value_acc) << "\n";
  os << "Context avg/max " << fmt(static_cast<double>(context_tokens_sum) / denom, 1) << " / "
     << context_tokens_max << "\n";
  os << "Input avg/max   " << fmt(static_cast<double>(input_tokens_sum) / denom, 1) << " / "
     << input_tokens_max << "\n";
  for (const auto& [k, v] : extra) os << k << " " << fmt(v) << "\n";
  return os.str();
}

std::string MetricReport::per_feature_csv() const {
  std::ostringstream os;
  os << "feature,tp,fp,fn,f1,mae,mae_n,acc,acc_n\n";
  std::set<std::string> keys;
  for (const auto& [k, c] : events.per_feature) keys.insert(k);
  for (const auto& [k, c] : mae.per_feature()) keys.insert(k);
  for (const auto& [k, c] : cat_acc.per_feature()) keys.insert(k);
  for (const auto& k : keys) {
    os << '"' << k << '"';
    if (auto it = events.per_feature.find(k); it != events.per_feature.end()) {
      os << ',' << it->second.tp << ',' << it->second.fp << ',' << it->second.fn << ','
         << fmt(it->second.f1(), 6);
    } else {
      os << ",,,,";
    }
    if (auto it = mae.per_feature().find(k); it != mae.per_feature().end()) {
      os << ',' << fmt(it->second.first / static_cast<double>(it->second.second), 6) << ','
         << it->second.second;
    } else {
      os << ",,";
    }
    if (auto it = cat_acc.per_feature().find(k); it != cat_acc.per_feature().end()) {
      os << ',' << fmt(it->second.first / static_cast<double>(it->second.second), 6) << ','
         << it->second.second;
    } else {
      os << ",,";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace ehrtraj
