#include "ehrtraj/sampling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace ehrtraj {

double SampleWeightTable::freq(const std::string& key) const {
  if (auto it = event_freq.find(key); it != event_freq.end()) return it->second;
  return 1.0 / static_cast<double>(std::max<std::size_t>(n_train_labels, 1));
}

SampleWeightTable SampleWeightTable::build(const std::vector<PatientRecord>& train, double transition_boost) {
  if (transition_boost < 1.0) throw std::invalid_argument("transition_boost must be >= 1");
  SampleWeightTable table;
  table.transition_boost = transition_boost;
  std::map<std::string, std::size_t> counts;
  for (const auto& r : train) {
    for (int t = 1; t <= r.total_hours; ++t) {
      ++table.n_train_labels;
      for (const auto& key : label_at(r, t).recorded_features()) ++counts[key.to_string()];
    }
  }
  for (const auto& [k, c] : counts) {
    table.event_freq[k] = static_cast<double>(c) / static_cast<double>(table.n_train_labels);
  }
  return table;
}

Json SampleWeightTable::to_json() const {
  return {{"schema_version", 1},
          {"transition_boost", transition_boost},
          {"n_train_labels", n_train_labels},
          {"event_freq", event_freq}};
}

SampleWeightTable SampleWeightTable::from_json(const Json& j) {
  SampleWeightTable t;
  t.transition_boost = j.at("transition_boost").get<double>();
  t.n_train_labels = j.at("n_train_labels").get<std::size_t>();
  t.event_freq = j.at("event_freq").get<std::map<std::string, double>>();
  return t;
}

double compute_weight(const TimestepOutput& label, const SampleWeightTable& table) {
  double w = 1.0;
  for (const auto& key : label.recorded_features()) w += std::log(1.0 + 1.0 / table.freq(key.to_string()));
  if (!label.states.empty()) w *= table.transition_boost;
  return w;
}

std::vector<TimePoint> all_timepoints(const std::vector<PatientRecord>& cohort) {
  std::vector<TimePoint> out;
  for (std::size_t p = 0; p < cohort.size(); ++p) {
    for (int t = 0; t < cohort[p].total_hours; ++t) out.push_back({p, t});
  }
  return out;
}

std::vector<TimePoint> draw_samples(const std::vector<PatientRecord>& cohort,
                                    const SampleWeightTable& table, std::size_t count, Rng& rng) {
  if (count < 1) throw std::invalid_argument("draw_samples needs count >= 1");
  const auto points = all_timepoints(cohort);
  if (points.empty()) throw std::invalid_argument("draw_samples on an empty cohort");
  std::vector<double> cumulative;
  cumulative.reserve(points.size());
  double total = 0.0;
  for (const auto& tp : points) {
    total += compute_weight(label_at(cohort[tp.patient], tp.t + 1), table);
    cumulative.push_back(total);
  }
  std::vector<TimePoint> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double u = uniform01(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    out.push_back(points[static_cast<std::size_t>(it - cumulative.begin())]);
  }
  return out;
}

PatientSplit fixed_eval_split(const std::vector<std::string>& patient_ids,
                              const SplitFractions& fractions, Rng& rng) {
  const std::array<double, 3> f = {fractions.val, fractions.test, fractions.train};
  for (double x : f) {
    if (x < 0.0) throw std::invalid_argument("split fractions must be non-negative");
  }
  if (f[0] + f[1] + f[2] > 1.0 + 1e-9) throw std::invalid_argument("split fractions sum above 1");
  const std::size_t n = patient_ids.size();
  const auto target_total = static_cast<std::size_t>(std::floor((f[0] + f[1] + f[2]) * static_cast<double>(n) + 1e-9));
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = f[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::size_t leftover = target_total > assigned ? target_total - assigned : 0;
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b] + 1e-12; });
  for (int idx : order) {
    if (leftover == 0) break;
    if (remainder[idx] > 1e-12) {
      ++sizes[idx];
      --leftover;
    }
  }
  for (int i = 0; i < 3; ++i) {
    if (f[i] > 0.0 && sizes[i] == 0) {
      throw std::invalid_argument("insufficient patients for the requested split");
    }
  }
  std::vector<std::string> shuffled = patient_ids;
  std::sort(shuffled.begin(), shuffled.end());
  if (std::adjacent_find(shuffled.begin(), shuffled.end()) != shuffled.end()) {
    throw std::invalid_argument("duplicate patient ids");
  }
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i - 1)))]);
  }
  PatientSplit split;
  auto it = shuffled.begin();
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[2]));
  it += static_cast<std::ptrdiff_t>(sizes[2]);
  split.val.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  split.test.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  return split;
}

std::vector<TimePoint> eval_timepoints(const std::vector<PatientRecord>& cohort,
                                       const std::vector<std::string>& patient_ids,
                                       std::size_t count, Rng& rng) {
  std::set<std::string> wanted(patient_ids.begin(), patient_ids.end());
  std::vector<TimePoint> pool;
  for (std::size_t p = 0; p < cohort.size(); ++p) {
    if (!wanted.contains(cohort[p].patient_id)) continue;
    for (int t = 0; t < cohort[p].total_hours; ++t) pool.push_back({p, t});
  }
  if (count >= pool.size()) return pool;
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(i),
                                                        static_cast<std::int64_t>(pool.size() - 1)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<PatientRecord> select_patients(const std::vector<PatientRecord>& cohort,
                                           const std::vector<std::string>& patient_ids) {
  std::set<std::string> wanted(patient_ids.begin(), patient_ids.end());
  std::vector<PatientRecord> out;
  for (const auto& r : cohort) {
    if (wanted.contains(r.patient_id)) out.push_back(r);
  }
  return out;
}

}  // namespace ehrtraj
