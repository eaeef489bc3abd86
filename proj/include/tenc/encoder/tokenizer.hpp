#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tenc/error.hpp"

namespace tenc::encoder {

// Token <-> id map with four reserved ids. Ids are dense 0..size()-1.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kCls = 2;
  static constexpr std::size_t kSep = 3;

  Vocabulary() {
    for (const char* t : {"[PAD]", "[UNK]", "[CLS]", "[SEP]"}) insert(t);
  }

  // Returns the id of `token`, assigning the next free id if it is new.
  std::size_t add(std::string_view token) {
    auto it = ids_.find(std::string(token));
    if (it != ids_.end()) return it->second;
    return insert(std::string(token));
  }

  std::size_t id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
  }

  bool contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::size_t insert(std::string token) {
    const std::size_t id = tokens_.size();
    ids_.emplace(token, id);
    tokens_.push_back(std::move(token));
    return id;
  }

  std::unordered_map<std::string, std::size_t> ids_;
  std::vector<std::string> tokens_;
};

// Lowercases (ASCII) and splits on whitespace.
inline std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

// Vocabulary over every word of `texts`, ids assigned in first-seen order.
inline Vocabulary build_vocabulary(std::span<const std::string> texts) {
  Vocabulary v;
  for (const auto& t : texts) {
    for (const auto& w : normalize_words(t)) v.add(w);
  }
  return v;
}

struct TokenSequence {
  std::vector<std::size_t> ids;
  std::vector<std::uint8_t> mask;  // 1 for real tokens, 0 for [PAD]
  std::size_t max_len = 0;

  std::size_t size() const noexcept { return ids.size(); }
};

// [CLS] w1 ... wk [SEP], keeping the first max_len - 2 words.
inline TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 3) throw Error("encoder", "max_len must be at least 3");
  const auto words = normalize_words(text);
  const std::size_t keep = std::min(words.size(), max_len - 2);
  TokenSequence seq;
  seq.max_len = max_len;
  seq.ids.reserve(keep + 2);
  seq.ids.push_back(Vocabulary::kCls);
  for (std::size_t i = 0; i < keep; ++i) seq.ids.push_back(vocab.id(words[i]));
  seq.ids.push_back(Vocabulary::kSep);
  seq.mask.assign(seq.ids.size(), 1);
  return seq;
}

// Appends [PAD] up to `length`.
inline TokenSequence pad_to(TokenSequence seq, std::size_t length) {
  if (length < seq.ids.size()) throw Error("encoder", "cannot pad a sequence to a shorter length");
  seq.ids.resize(length, Vocabulary::kPad);
  seq.mask.resize(length, 0);
  seq.max_len = std::max(seq.max_len, length);
  return seq;
}

namespace detail {

// Content tokens of a single-sentence sequence (between [CLS] and [SEP]).
inline std::span<const std::size_t> content(const TokenSequence& s) {
  std::size_t n = 0;
  while (n < s.ids.size() && s.mask[n]) ++n;
  if (n < 2 || s.ids[0] != Vocabulary::kCls || s.ids[n - 1] != Vocabulary::kSep) {
    throw Error("encoder", "expected a [CLS] ... [SEP] sequence");
  }
  return std::span<const std::size_t>(s.ids).subspan(1, n - 2);
}

}  // namespace detail

// [CLS] sent1 [SEP] sent2 [SEP]. When the pair does not fit in max_len, the
// available budget is split with the first sentence taking the larger half
// and any slack handed to whichever side still has tokens.
inline TokenSequence make_cross_sequence(const TokenSequence& first, const TokenSequence& second,
                                         std::size_t max_len) {
  if (max_len < 3) throw Error("encoder", "max_len must be at least 3");
  const auto a = detail::content(first);
  const auto b = detail::content(second);
  const std::size_t budget = max_len - 3;
  std::size_t na = a.size(), nb = b.size();
  if (na + nb > budget) {
    const std::size_t half = (budget + 1) / 2;
    na = std::min(a.size(), std::max(half, budget - std::min(b.size(), budget)));
    nb = std::min(b.size(), budget - na);
  }
  TokenSequence seq;
  seq.max_len = max_len;
  seq.ids.push_back(Vocabulary::kCls);
  seq.ids.insert(seq.ids.end(), a.begin(), a.begin() + static_cast<std::ptrdiff_t>(na));
  seq.ids.push_back(Vocabulary::kSep);
  seq.ids.insert(seq.ids.end(), b.begin(), b.begin() + static_cast<std::ptrdiff_t>(nb));
  seq.ids.push_back(Vocabulary::kSep);
  seq.mask.assign(seq.ids.size(), 1);
  return seq;
}

}  // namespace tenc::encoder
