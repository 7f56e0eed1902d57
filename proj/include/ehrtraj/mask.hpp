#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ehrtraj {

/// Square attention-permission matrix: row i may attend to column j iff
/// allowed(i, j). Indices are 0-based.
class AttnMask {
 public:
  AttnMask() = default;
  explicit AttnMask(int n) : n_(n), bits_(static_cast<std::size_t>(n) * n, 0) {}

  static AttnMask causal(int n) {
    AttnMask m(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= i; ++j) m.set(i, j, true);
    }
    return m;
  }

  int size() const { return n_; }
  bool empty() const { return n_ == 0; }
  bool allowed(int i, int j) const { return bits_[static_cast<std::size_t>(i) * n_ + j] != 0; }
  void set(int i, int j, bool v) { bits_[static_cast<std::size_t>(i) * n_ + j] = v ? 1 : 0; }

  friend bool operator==(const AttnMask&, const AttnMask&) = default;

 private:
  int n_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Partition of a bottleneck training sequence: n input tokens, m summary
/// tokens, o output tokens.
struct MaskSpec {
  int n = 0;
  int m = 1;
  int o = 0;

  int total() const { return n + m + o; }
  void check(int max_seq) const {
    if (n < 0 || o < 0 || m < 1) throw std::invalid_argument("MaskSpec needs n, o >= 0 and m >= 1");
    if (total() > max_seq) throw std::invalid_argument("MaskSpec exceeds max_seq");
  }
};

/// With 1-based i, j: allowed iff j <= i and (i <= n + m or j > n). Output
/// rows therefore see summary and earlier output tokens only.
inline AttnMask bottleneck_mask(const MaskSpec& spec) {
  spec.check(spec.total());
  const int size = spec.total();
  AttnMask mask(size);
  for (int i = 1; i <= size; ++i) {
    for (int j = 1; j <= i; ++j) {
      if (i <= spec.n + spec.m || j > spec.n) mask.set(i - 1, j - 1, true);
    }
  }
  return mask;
}

}  // namespace ehrtraj
