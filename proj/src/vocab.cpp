#include "ehrtraj/vocab.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace ehrtraj {

namespace {

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::size_t run_end(std::string_view text, std::size_t i) {
  const bool alpha = is_alpha(text[i]);
  std::size_t j = i + 1;
  while (j < text.size() && (alpha ? is_alpha(text[j]) : is_digit(text[j]))) ++j;
  return j;
}

constexpr const char* kReservedNames[kNumReserved] = {"<pad>", "<bos>", "<eos>",
                                                      "<sum>", "<sep>", "<out>"};

}  // namespace

std::vector<std::string> pretokenize(std::string_view text) {
  std::vector<std::string> pieces;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    std::size_t j = i + 1;
    if (c == '\n') {
      while (j < text.size() && text[j] == ' ') ++j;
    } else if (is_alpha(c) || is_digit(c)) {
      j = run_end(text, i);
    } else if (c == ' ') {
      if (j < text.size() && (is_alpha(text[j]) || is_digit(text[j]))) {
        j = run_end(text, j);
      } else {
        while (j < text.size() && text[j] == ' ' &&
               !(j + 1 < text.size() && (is_alpha(text[j + 1]) || is_digit(text[j + 1])))) {
          ++j;
        }
      }
    }
    pieces.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return pieces;
}

void Vocab::add(std::string token) {
  const int id = static_cast<int>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
}

Vocab Vocab::build(std::span<const std::string> corpus, int min_count) {
  Vocab v;
  for (const char* name : kReservedNames) {
    v.tokens_.emplace_back(name);  // not indexed: text never maps to reserved ids
  }
  for (int b = 0; b < 256; ++b) v.add(std::string(1, static_cast<char>(b)));
  std::map<std::string, int> counts;
  for (const auto& text : corpus) {
    for (auto& p : pretokenize(text)) {
      if (p.size() > 1) ++counts[std::move(p)];
    }
  }
  std::vector<std::pair<std::string, int>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [piece, count] : ordered) {
    if (count >= min_count) v.add(piece);
  }
  return v;
}

std::optional<int> Vocab::find(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& piece : pretokenize(text)) {
    if (auto it = index_.find(piece); it != index_.end()) {
      ids.push_back(it->second);
      continue;
    }
    if (piece.size() > 1 && piece[0] == ' ') {
      if (auto rest = index_.find(piece.substr(1)); rest != index_.end()) {
        ids.push_back(kFirstByteToken + ' ');
        ids.push_back(rest->second);
        continue;
      }
    }
    for (unsigned char b : piece) ids.push_back(kFirstByteToken + b);
  }
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id));
    if (!is_reserved(id)) out += tokens_[static_cast<std::size_t>(id)];
  }
  return out;
}

Json Vocab::to_json() const {
  Json pieces = Json::array();
  for (std::size_t i = kFirstByteToken + 256; i < tokens_.size(); ++i) pieces.push_back(tokens_[i]);
  return {{"reserved", kNumReserved}, {"byte_fallback", 256}, {"pieces", pieces}};
}

Vocab Vocab::from_json(const Json& j) {
  if (j.at("reserved").get<int>() != kNumReserved || j.at("byte_fallback").get<int>() != 256) {
    throw std::runtime_error("incompatible vocabulary layout");
  }
  Vocab v;
  for (const char* name : kReservedNames) v.tokens_.emplace_back(name);
  for (int b = 0; b < 256; ++b) v.add(std::string(1, static_cast<char>(b)));
  for (const auto& p : j.at("pieces")) v.add(p.get<std::string>());
  return v;
}

}  // namespace ehrtraj
