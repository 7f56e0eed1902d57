#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ehrtraj/io.hpp"

namespace ehrtraj {

enum ReservedToken : int {
  kPad = 0,
  kBos = 1,
  kEos = 2,
  kSum = 3,  // summary slot
  kSep = 4,  // section separator
  kOut = 5,  // start of the generated output
};
inline constexpr int kNumReserved = 6;
inline constexpr int kFirstByteToken = kNumReserved;

/// Splits text into pieces: letter runs and digit runs (optionally with one
/// leading space), a newline together with the indentation that follows it,
/// runs of spaces, and single other bytes.
std::vector<std::string> pretokenize(std::string_view text);

/// Word-level vocabulary with a full single-byte fallback, so every byte
/// string encodes. Reserved ids are never produced by encode().
class Vocab {
 public:
  static Vocab build(std::span<const std::string> corpus, int min_count = 1);

  std::vector<int> encode(std::string_view text) const;
  /// Reserved ids decode to nothing.
  std::string decode(std::span<const int> ids) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<int> find(std::string_view piece) const;
  static bool is_reserved(int id) { return id >= 0 && id < kNumReserved; }

  Json to_json() const;
  static Vocab from_json(const Json& j);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace ehrtraj
