#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ehrtraj/io.hpp"
#include "ehrtraj/random.hpp"
#include "ehrtraj/record.hpp"

namespace ehrtraj {

/// Per numeric feature 1st / 99th percentiles (linear interpolation between
/// order statistics) of the training values.
struct NormStats {
  std::map<std::string, std::pair<double, double>> ranges;  // FeatureKey::to_string -> (p1, p99)

  static NormStats fit(const std::vector<PatientRecord>& train);
  Json to_json() const;
  static NormStats from_json(const Json& j);
};

double percentile(std::vector<double> values, double q);

/// Clip to [p1, p99] and scale to [0, 1]; a degenerate range maps to 0.5.
double normalize(double value, double p1, double p99);

enum class UnknownFeaturePolicy { Skip, Identity };

/// nullopt when the feature has no stats and the policy is Skip; Identity
/// clips the raw value to [0, 1].
std::optional<double> normalize(const NormStats& stats, const std::string& key, double value,
                                UnknownFeaturePolicy policy = UnknownFeaturePolicy::Skip);

struct Confusion {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  double f1() const;
};

struct F1Result {
  double micro = 1.0;           // 1.0 when nothing was predicted or observed
  std::optional<double> macro;  // over features seen in prediction or truth
  std::map<std::string, Confusion> per_feature;
};

class F1Accumulator {
 public:
  void add(const std::set<std::string>& pred, const std::set<std::string>& truth);
  F1Result result() const;

 private:
  std::map<std::string, Confusion> per_feature_;
};

F1Result event_f1(const std::vector<std::set<std::string>>& preds,
                  const std::vector<std::set<std::string>>& truths);

/// How a truth value without a matching prediction is scored.
enum class MatchMode {
  MissingIsMaxError,  // next-step scoring: error 1.0 / accuracy 0
  MatchedOnly,        // simulation scoring: skipped
};

std::string_view match_mode_name(MatchMode mode);

template <typename V>
struct TimedValue {
  int hour = 0;
  V value{};
};

/// Index of the prediction nearest to `hour` within +-tol, ties to the
/// earlier hour; nullopt if none.
template <typename V>
std::optional<std::size_t> nearest_match(std::span<const TimedValue<V>> preds, int hour, int tol) {
  std::optional<std::size_t> best;
  int best_dist = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int dist = preds[i].hour > hour ? preds[i].hour - hour : hour - preds[i].hour;
    if (dist > tol) continue;
    if (!best || dist < best_dist || (dist == best_dist && preds[i].hour < preds[*best].hour)) {
      best = i;
      best_dist = dist;
    }
  }
  return best;
}

/// |norm(pred) - norm(truth)| for the nearest prediction within tolerance;
/// otherwise 1.0, or nullopt under MatchedOnly. Values are already
/// normalised.
std::optional<double> modified_mae(std::span<const TimedValue<double>> preds, TimedValue<double> truth,
                                   int tol_hours, MatchMode mode = MatchMode::MissingIsMaxError);

std::optional<double> modified_accuracy(std::span<const TimedValue<std::string>> preds,
                                        const TimedValue<std::string>& truth, int tol_hours,
                                        MatchMode mode = MatchMode::MissingIsMaxError);

/// Mean-aggregated error/accuracy with micro (pooled) and macro (per-feature)
/// views.
class ScoreAccumulator {
 public:
  void add(const std::string& feature, double score);
  std::optional<double> micro() const;
  std::optional<double> macro() const;
  const std::map<std::string, std::pair<double, long>>& per_feature() const { return per_feature_; }
  std::size_t count() const { return static_cast<std::size_t>(count_); }

 private:
  std::map<std::string, std::pair<double, long>> per_feature_;  // sum, count
  double sum_ = 0.0;
  long count_ = 0;
};

/// Section-level compression: each section of n tokens becomes
/// ceil(n / max_section_tokens) blocks of m summary slots.
struct SummaryLayout {
  int m = 8;
  int max_section_tokens = 5000;
  int slots_for(std::size_t section_tokens) const;
};

struct TokenCounts {
  std::size_t context_tokens = 0;
  std::size_t input_tokens = 0;
  double ratio() const {
    return input_tokens ? static_cast<double>(context_tokens) / static_cast<double>(input_tokens) : 0.0;
  }
};

/// Tokens of one summarised section versus its summary slots.
TokenCounts section_accounting(std::size_t section_tokens, const SummaryLayout& layout);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap of the mean. When n^n <= resamples every ordered
/// resample is enumerated, which gives the exact bootstrap distribution;
/// otherwise `resamples` draws are taken from rng. Quantiles use the
/// inverse of the empirical CDF.
Interval bootstrap_ci(std::span<const double> scores, double level, std::size_t resamples, Rng& rng);

/// Smallest value whose empirical CDF reaches q (values sorted ascending).
double inverse_cdf(std::span<const double> sorted, double q);

struct MetricReport {
  std::string mode;  // MatchMode used for values
  F1Result events;
  ScoreAccumulator mae;
  ScoreAccumulator cat_acc;
  std::optional<double> value_acc;  // numeric and categorical accuracy pooled
  std::optional<Interval> f1_ci;
  std::optional<Interval> mae_ci;
  std::size_t cases = 0;
  std::size_t context_tokens_sum = 0, context_tokens_max = 0;
  std::size_t input_tokens_sum = 0, input_tokens_max = 0;
  std::map<std::string, double> extra;  // task-specific scalars (e.g. accuracy)

  void add_tokens(const TokenCounts& c);
  Json to_json() const;
  std::string table() const;
  std::string per_feature_csv() const;
};

}  // namespace ehrtraj
