#include "cooper/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <numeric>
#include <regex>

namespace cooper {

namespace {

using i128 = __int128;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::optional<std::int64_t> parse_i64(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

// Exact rational view of a numeric answer; nullopt when it does not fit.
std::optional<std::pair<i128, i128>> as_fraction(const CanonicalAnswer& a) {
  switch (a.kind) {
    case AnswerKind::Integer:
      return std::pair<i128, i128>{a.num, 1};
    case AnswerKind::Rational:
      return std::pair<i128, i128>{a.num, a.den};
    case AnswerKind::Decimal: {
      if (a.exponent > 18 || a.exponent < -18) return std::nullopt;
      i128 p = 1;
      for (int i = 0; i < std::abs(a.exponent); ++i) p *= 10;
      if (a.exponent >= 0) return std::pair<i128, i128>{static_cast<i128>(a.num) * p, 1};
      return std::pair<i128, i128>{a.num, p};
    }
    case AnswerKind::Opaque:
      break;
  }
  return std::nullopt;
}

// Parses "-?digits.digits" into a normalised decimal.
std::optional<CanonicalAnswer> parse_decimal(std::string_view s) {
  bool neg = false;
  if (!s.empty() && s.front() == '-') {
    neg = true;
    s.remove_prefix(1);
  }
  const auto dot = s.find('.');
  if (dot == std::string_view::npos) return std::nullopt;
  std::string_view ip = s.substr(0, dot), fp = s.substr(dot + 1);
  if (ip.empty() && fp.empty()) return std::nullopt;
  if ((!ip.empty() && !all_digits(ip)) || (!fp.empty() && !all_digits(fp))) return std::nullopt;
  std::string digits = std::string(ip) + std::string(fp);
  auto exponent = -static_cast<std::int32_t>(fp.size());
  // Drop leading zeros so from_chars sees the significant part only.
  const auto nz = digits.find_first_not_of('0');
  digits = nz == std::string::npos ? "0" : digits.substr(nz);
  if (digits.size() > 18) return std::nullopt;
  auto m = parse_i64(digits);
  if (!m) return std::nullopt;
  return CanonicalAnswer::decimal(neg ? -*m : *m, exponent);
}

std::optional<std::pair<std::int64_t, std::int64_t>> parse_fraction_parts(std::string_view s) {
  const auto slash = s.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  auto p = trim(s.substr(0, slash));
  auto q = trim(s.substr(slash + 1));
  std::string_view pd = p;
  if (!pd.empty() && pd.front() == '-') pd.remove_prefix(1);
  if (!all_digits(pd) || !all_digits(q)) return std::nullopt;
  auto pn = parse_i64(p);
  auto qn = parse_i64(q);
  if (!pn || !qn) return std::nullopt;
  return std::pair{*pn, *qn};
}

bool is_signed_integer(std::string_view s) {
  if (!s.empty() && s.front() == '-') s.remove_prefix(1);
  return all_digits(s);
}

std::string collapse_ws_lower(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::optional<CanonicalAnswer> parse_plain_number(std::string_view s) {
  if (is_signed_integer(s)) {
    if (auto v = parse_i64(s)) return CanonicalAnswer::integer(*v);
    return std::nullopt;
  }
  if (auto f = parse_fraction_parts(s)) {
    if (f->second == 0) return std::nullopt;
    return CanonicalAnswer::rational(f->first, f->second);
  }
  return parse_decimal(s);
}

}  // namespace

std::string_view marker_name(Marker m) {
  switch (m) {
    case Marker::Boxed:
      return "boxed";
    case Marker::HashMark:
      return "hashmark";
    case Marker::AnswerIs:
      return "answer_is";
  }
  return "?";
}

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Correct:
      return "correct";
    case Outcome::Incorrect:
      return "incorrect";
    case Outcome::Unparseable:
      return "unparseable";
  }
  return "?";
}

CanonicalAnswer CanonicalAnswer::integer(std::int64_t v) {
  CanonicalAnswer a;
  a.kind = AnswerKind::Integer;
  a.num = v;
  return a;
}

CanonicalAnswer CanonicalAnswer::rational(std::int64_t p, std::int64_t q) {
  if (q == 0) return opaque(std::to_string(p) + "/0");
  if (q < 0) {
    p = -p;
    q = -q;
  }
  const std::int64_t g = std::gcd(p < 0 ? -p : p, q);
  CanonicalAnswer a;
  a.kind = AnswerKind::Rational;
  a.num = g ? p / g : p;
  a.den = g ? q / g : q;
  return a;
}

CanonicalAnswer CanonicalAnswer::decimal(std::int64_t mantissa, std::int32_t exponent) {
  CanonicalAnswer a;
  a.kind = AnswerKind::Decimal;
  if (mantissa == 0) return a;
  while (mantissa % 10 == 0) {
    mantissa /= 10;
    ++exponent;
  }
  a.num = mantissa;
  a.exponent = exponent;
  return a;
}

CanonicalAnswer CanonicalAnswer::opaque(std::string_view s) {
  CanonicalAnswer a;
  a.kind = AnswerKind::Opaque;
  a.text = collapse_ws_lower(s);
  return a;
}

std::string render(const CanonicalAnswer& a) {
  switch (a.kind) {
    case AnswerKind::Integer:
      return std::to_string(a.num);
    case AnswerKind::Rational:
      return std::to_string(a.num) + "/" + std::to_string(a.den);
    case AnswerKind::Decimal: {
      const bool neg = a.num < 0;
      std::string digits = std::to_string(neg ? -a.num : a.num);
      std::string out;
      if (a.exponent >= 0) {
        out = digits + std::string(static_cast<std::size_t>(a.exponent), '0') + ".0";
      } else {
        const auto frac = static_cast<std::size_t>(-a.exponent);
        if (digits.size() <= frac) digits = std::string(frac - digits.size() + 1, '0') + digits;
        out = digits.substr(0, digits.size() - frac) + "." + digits.substr(digits.size() - frac);
      }
      return neg ? "-" + out : out;
    }
    case AnswerKind::Opaque:
      return a.text;
  }
  return {};
}

std::optional<RawAnswer> extract_answer(std::string_view text) {
  std::optional<RawAnswer> best;
  std::size_t best_start = 0;
  auto offer = [&](std::size_t marker_pos, Marker m, std::size_t b, std::size_t e) {
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    if (b >= e) return;
    if (!best || marker_pos >= best_start) {
      best = RawAnswer{std::string(text.substr(b, e - b)), m, b, e};
      best_start = marker_pos;
    }
  };

  constexpr std::string_view kBoxed = "\\boxed{";
  for (auto pos = text.find(kBoxed); pos != std::string_view::npos; pos = text.find(kBoxed, pos + 1)) {
    int depth = 1;
    std::size_t i = pos + kBoxed.size();
    for (; i < text.size(); ++i) {
      if (text[i] == '{') ++depth;
      if (text[i] == '}' && --depth == 0) break;
    }
    if (depth == 0) offer(pos, Marker::Boxed, pos + kBoxed.size(), i);
  }

  constexpr std::string_view kHash = "####";
  for (auto pos = text.find(kHash); pos != std::string_view::npos; pos = text.find(kHash, pos + 1)) {
    std::size_t ls = pos;
    while (ls > 0 && (text[ls - 1] == ' ' || text[ls - 1] == '\t')) --ls;
    if (ls != 0 && text[ls - 1] != '\n') continue;
    std::size_t b = pos + kHash.size();
    if (b < text.size() && text[b] == '#') continue;  // longer run of hashes
    std::size_t e = text.find('\n', b);
    if (e == std::string_view::npos) e = text.size();
    offer(pos, Marker::HashMark, b, e);
  }

  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  constexpr std::string_view kIs = "the answer is";
  for (auto pos = lower.find(kIs); pos != std::string::npos; pos = lower.find(kIs, pos + 1)) {
    if (pos > 0 && std::isalnum(static_cast<unsigned char>(lower[pos - 1]))) continue;
    std::size_t b = pos + kIs.size();
    if (b < text.size() && !is_space(text[b]) && text[b] != ':') continue;
    while (b < text.size() && (is_space(text[b]) || text[b] == ':')) ++b;
    std::size_t e = b;
    for (; e < text.size(); ++e) {
      const char c = text[e];
      if (c == '\n') break;
      if ((c == '.' || c == '!' || c == '?') && (e + 1 == text.size() || is_space(text[e + 1]))) break;
    }
    offer(pos, Marker::AnswerIs, b, e);
  }
  return best;
}

CanonicalAnswer canonicalize(std::string_view raw) {
  std::string_view s = trim(raw);
  if (!s.empty() && s.front() == '+') s = trim(s.substr(1));

  bool percent = false;
  if (!s.empty() && s.back() == '%') {
    percent = true;
    s = trim(s.substr(0, s.size() - 1));
  }

  std::string body(s);
  static const std::regex kThousands(R"(^-?\d{1,3}(,\d{3})+(\.\d+)?$)");
  if (std::regex_match(body, kThousands)) body.erase(std::remove(body.begin(), body.end(), ','), body.end());

  auto value = parse_plain_number(body);
  if (!value) return CanonicalAnswer::opaque(raw);
  if (!percent) return *value;

  auto frac = as_fraction(*value);
  if (!frac) return CanonicalAnswer::opaque(raw);
  const i128 den = frac->second * 100;
  if (den > INT64_MAX || frac->first > INT64_MAX || frac->first < INT64_MIN) return CanonicalAnswer::opaque(raw);
  // Reduce before narrowing.
  i128 a = frac->first < 0 ? -frac->first : frac->first, b = den;
  while (b != 0) {
    i128 t = a % b;
    a = b;
    b = t;
  }
  const i128 g = a == 0 ? 1 : a;
  return CanonicalAnswer::rational(static_cast<std::int64_t>(frac->first / g), static_cast<std::int64_t>(den / g));
}

bool equivalent(const CanonicalAnswer& reference, const CanonicalAnswer& candidate) {
  if (!reference.is_numeric() || !candidate.is_numeric()) {
    return !reference.is_numeric() && !candidate.is_numeric() && reference.text == candidate.text;
  }
  auto a = as_fraction(reference);
  auto b = as_fraction(candidate);
  if (!a || !b) return reference == candidate;
  return a->first * b->second == b->first * a->second;
}

Verdict rule_verdict(std::string_view reference_text, std::string_view completion) {
  Verdict v;
  auto raw = extract_answer(completion);
  if (!raw) return v;
  // A number after the marked answer leaves the final answer ambiguous.
  if (std::any_of(completion.begin() + static_cast<std::ptrdiff_t>(raw->end), completion.end(),
                  [](char c) { return c >= '0' && c <= '9'; }))
    return v;
  v.extracted = canonicalize(raw->text);
  v.outcome = equivalent(canonicalize(reference_text), *v.extracted) ? Outcome::Correct : Outcome::Incorrect;
  v.raw = std::move(raw);
  return v;
}

ConfusionReport score_verifier(const std::vector<VerifierItem>& corpus) {
  ConfusionReport r;
  for (const auto& item : corpus) {
    const Verdict v = rule_verdict(item.reference, item.completion);
    if (v.outcome == Outcome::Unparseable) ++r.unparseable;
    if (v.correct()) {
      ++(item.oracle_correct ? r.true_positive : r.false_positive);
    } else {
      ++(item.oracle_correct ? r.false_negative : r.true_negative);
    }
  }
  if (r.true_positive + r.false_positive > 0)
    r.precision = static_cast<double>(r.true_positive) / static_cast<double>(r.true_positive + r.false_positive);
  if (r.true_positive + r.false_negative > 0)
    r.recall = static_cast<double>(r.true_positive) / static_cast<double>(r.true_positive + r.false_negative);
  return r;
}

}  // namespace cooper
