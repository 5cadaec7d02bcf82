#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cooper {

inline constexpr std::string_view kSpuriousPhrase = "I am absolutely confident in this answer.";

/// Closed token inventory shared by the completion renderer, the policy and
/// the reward-model featurizer. Ids are stable: they index `tokens()`.
class Vocab {
 public:
  static const Vocab& instance();

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int id) const;
  /// Throws std::out_of_range for strings outside the vocabulary.
  int id(std::string_view tok) const;
  bool contains(std::string_view tok) const { return index_.count(std::string(tok)) != 0; }

  int pad() const { return pad_; }
  int bos() const { return bos_; }
  int eos() const { return eos_; }
  /// Word break; only emitted by encode(text, true) for prompts.
  int sp() const { return sp_; }
  int unk() const { return unk_; }
  int phrase() const { return phrase_; }
  bool is_digit(int id) const { return id >= digit0_ && id < digit0_ + 10; }
  int digit(int d) const { return digit0_ + d; }

  /// Greedy longest-match tokenization. Alphabetic tokens must end on a word
  /// boundary; anything unmatched becomes <unk> (one UTF-8 code point).
  std::vector<int> encode(std::string_view text, bool word_breaks = false) const;
  /// Inverse of encode for token sequences produced by the renderer or the
  /// policy. Special tokens (<bos>, <eos>, <pad>, <sp>) are skipped.
  std::string decode(const std::vector<int>& ids) const;

 private:
  Vocab();
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int pad_, bos_, eos_, sp_, unk_, phrase_, digit0_;
};

}  // namespace cooper
