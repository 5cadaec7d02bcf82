#include "cooper/vocab.hpp"

#include <cctype>
#include <stdexcept>

namespace cooper {

namespace {

const char* const kTokens[] = {
    "<pad>", "<bos>", "<eos>", "<sp>", "<unk>",
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    "+", "-", "×", "÷", "/", "=", ".", "%",
    "\\boxed{", "}", "####", "\n",
    "the", "answer", "is", "Compute", "we", "add", "subtract", "multiply", "divide",
    "two", "numbers", "second", "from", "first", "by", "fractions", "over", "a",
    "common", "denominator", "so", "result", "total", "comes", "to", "then",
    "check", "carefully", "step", "and", "this", "gives", "value", "of",
    "I am absolutely confident in this answer.",
};

bool is_glyph(const std::string& t) {
  return t.size() == 1 && (std::isdigit(static_cast<unsigned char>(t[0])) || t[0] == '/' || t[0] == '-');
}

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::size_t utf8_len(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xE) return 3;
  if ((c >> 3) == 0x1E) return 4;
  return 1;
}

}  // namespace

const Vocab& Vocab::instance() {
  static const Vocab v;
  return v;
}

Vocab::Vocab() {
  for (const char* t : kTokens) {
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.emplace_back(t);
  }
  pad_ = id("<pad>");
  bos_ = id("<bos>");
  eos_ = id("<eos>");
  sp_ = id("<sp>");
  unk_ = id("<unk>");
  phrase_ = id(kSpuriousPhrase);
  digit0_ = id("0");
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocab::id(std::string_view tok) const {
  auto it = index_.find(std::string(tok));
  if (it == index_.end()) throw std::out_of_range("token '" + std::string(tok) + "' not in vocabulary");
  return it->second;
}

std::vector<int> Vocab::encode(std::string_view text, bool word_breaks) const {
  std::vector<int> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == ' ' || text[i] == '\t' || text[i] == '\r') {
      while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\r')) ++i;
      if (word_breaks && !out.empty() && i < text.size()) out.push_back(sp_);
      continue;
    }
    int best = -1;
    std::size_t best_len = 0;
    for (int t = 0; t < size(); ++t) {
      const std::string& s = tokens_[static_cast<std::size_t>(t)];
      if (s.size() <= best_len || s.front() == '<' || text.compare(i, s.size(), s) != 0) continue;
      const std::size_t end = i + s.size();
      if (is_alpha(s.back()) && end < text.size() && is_alpha(text[end])) continue;
      best = t;
      best_len = s.size();
    }
    if (best < 0) {
      out.push_back(unk_);
      i += utf8_len(static_cast<unsigned char>(text[i]));
      continue;
    }
    out.push_back(best);
    i += best_len;
  }
  return out;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  const std::string* prev = nullptr;
  for (int id : ids) {
    if (id == pad_ || id == bos_ || id == eos_ || id == sp_) continue;
    const std::string& t = token(id);
    bool space = prev != nullptr;
    if (prev) {
      if (is_glyph(*prev) && is_glyph(t)) space = false;
      if (*prev == "\\boxed{" || t == "}" || t == "." || t == "\n" || *prev == "\n") space = false;
    }
    if (space) out.push_back(' ');
    out += t;
    prev = &t;
  }
  return out;
}

}  // namespace cooper
