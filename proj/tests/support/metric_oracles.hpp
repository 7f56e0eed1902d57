#pragma once

// Deliberately naive reference implementations used to check the metrics
// module. They share no code with it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace ehrtraj::oracle {

struct F1 {
  double micro = 1.0;
  std::optional<double> macro;
};

inline bool contains(const std::vector<std::string>& v, const std::string& x) {
  for (const auto& e : v) {
    if (e == x) return true;
  }
  return false;
}

inline F1 event_f1(const std::vector<std::vector<std::string>>& preds,
                   const std::vector<std::vector<std::string>>& truths) {
  std::vector<std::string> universe;
  for (const auto& c : preds) {
    for (const auto& k : c) {
      if (!contains(universe, k)) universe.push_back(k);
    }
  }
  for (const auto& c : truths) {
    for (const auto& k : c) {
      if (!contains(universe, k)) universe.push_back(k);
    }
  }
  double tp_all = 0, fp_all = 0, fn_all = 0, macro = 0;
  for (const auto& k : universe) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool p = contains(preds[i], k);
      const bool t = contains(truths[i], k);
      if (p && t) tp += 1;
      if (p && !t) fp += 1;
      if (!p && t) fn += 1;
    }
    macro += (2 * tp + fp + fn) == 0 ? 1.0 : 2 * tp / (2 * tp + fp + fn);
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
  }
  F1 r;
  if (tp_all + fp_all + fn_all > 0) r.micro = 2 * tp_all / (2 * tp_all + fp_all + fn_all);
  if (!universe.empty()) r.macro = macro / static_cast<double>(universe.size());
  return r;
}

// Walk outwards from the truth hour: offset 0, then -1, +1, -2, +2, ...
template <typename V>
std::optional<V> find_near(const std::vector<std::pair<int, V>>& preds, int hour, int tol) {
  for (int d = 0; d <= tol; ++d) {
    for (int h : {hour - d, hour + d}) {
      for (const auto& [ph, v] : preds) {
        if (ph == h) return v;
      }
    }
  }
  return std::nullopt;
}

inline std::optional<double> mae(const std::vector<std::pair<int, double>>& preds, int hour, double truth,
                                 int tol, bool matched_only) {
  auto v = find_near(preds, hour, tol);
  if (!v) return matched_only ? std::nullopt : std::optional<double>(1.0);
  return std::min(1.0, std::fabs(*v - truth));
}

inline std::optional<double> accuracy(const std::vector<std::pair<int, std::string>>& preds, int hour,
                                      const std::string& truth, int tol, bool matched_only) {
  auto v = find_near(preds, hour, tol);
  if (!v) return matched_only ? std::nullopt : std::optional<double>(0.0);
  return *v == truth ? 1.0 : 0.0;
}

// Exact bootstrap distribution of the mean via multiset counts weighted by
// their multinomial coefficient.
inline std::pair<double, double> bootstrap_exact(const std::vector<double>& x, double level) {
  const int n = static_cast<int>(x.size());
  std::vector<std::pair<double, double>> dist;  // (mean, weight)
  std::vector<int> counts(n, 0);
  auto factorial = [](int k) {
    double f = 1;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
  };
  // recursive composition enumeration
  auto rec = [&](auto&& self, int pos, int left) -> void {
    if (pos == n - 1) {
      counts[pos] = left;
      double w = factorial(n), s = 0;
      for (int i = 0; i < n; ++i) {
        w /= factorial(counts[i]);
        s += counts[i] * x[i];
      }
      dist.push_back({s / n, w});
      return;
    }
    for (int c = 0; c <= left; ++c) {
      counts[pos] = c;
      self(self, pos + 1, left - c);
    }
  };
  rec(rec, 0, n);
  std::sort(dist.begin(), dist.end());
  double total = 0;
  for (const auto& d : dist) total += d.second;
  auto quantile = [&](double q) {
    const double need = std::max(1.0, std::ceil(q * total - 1e-9));
    double cum = 0;
    for (const auto& d : dist) {
      cum += d.second;
      if (cum >= need) return d.first;
    }
    return dist.back().first;
  };
  const double a = (1 - level) / 2;
  return {quantile(a), quantile(1 - a)};
}

}  // namespace ehrtraj::oracle
