#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cooper {

enum class Marker { Boxed, HashMark, AnswerIs };

std::string_view marker_name(Marker m);

/// Answer substring located by one of the three recognised markers.
/// Invariant: source.substr(begin, end - begin) == text, begin < end.
struct RawAnswer {
  std::string text;
  Marker marker = Marker::Boxed;
  std::size_t begin = 0;
  std::size_t end = 0;
};

enum class AnswerKind { Integer, Rational, Decimal, Opaque };

/// Normalised answer value.
///  - Integer: num
///  - Rational: num/den in lowest terms, den > 0
///  - Decimal: num * 10^exponent with num not divisible by 10 (or num == 0, exponent == 0)
///  - Opaque: whitespace-collapsed, lower-cased text
struct CanonicalAnswer {
  AnswerKind kind = AnswerKind::Opaque;
  std::int64_t num = 0;
  std::int64_t den = 1;
  std::int32_t exponent = 0;
  std::string text;

  static CanonicalAnswer integer(std::int64_t v);
  static CanonicalAnswer rational(std::int64_t p, std::int64_t q);
  static CanonicalAnswer decimal(std::int64_t mantissa, std::int32_t exponent);
  static CanonicalAnswer opaque(std::string_view s);

  bool is_numeric() const { return kind != AnswerKind::Opaque; }
  bool operator==(const CanonicalAnswer&) const = default;
};

/// Text form that canonicalize() maps back to the same value.
std::string render(const CanonicalAnswer& a);

enum class Outcome { Correct, Incorrect, Unparseable };

std::string_view outcome_name(Outcome o);

struct Verdict {
  Outcome outcome = Outcome::Unparseable;
  std::optional<CanonicalAnswer> extracted;
  std::optional<RawAnswer> raw;

  bool correct() const { return outcome == Outcome::Correct; }
};

/// Last occurrence among `\boxed{...}` (balanced braces), a line-leading
/// `#### <answer>`, and `the answer is <answer>` (up to end of sentence).
/// No free-form fallback.
std::optional<RawAnswer> extract_answer(std::string_view completion);

CanonicalAnswer canonicalize(std::string_view raw);

/// Exact equality of numeric kinds as rationals; Opaque compares text and
/// never equals a numeric value.
bool equivalent(const CanonicalAnswer& reference, const CanonicalAnswer& candidate);

/// Unparseable when no marker matches or when a digit follows the extracted
/// answer (the final answer is then ambiguous).
Verdict rule_verdict(std::string_view reference_text, std::string_view completion);

struct ConfusionReport {
  std::size_t true_positive = 0;   // rule Correct, oracle correct
  std::size_t false_positive = 0;  // rule Correct, oracle incorrect
  std::size_t false_negative = 0;  // rule Incorrect/Unparseable, oracle correct
  std::size_t true_negative = 0;
  std::size_t unparseable = 0;
  std::optional<double> precision;  // absent when undefined
  std::optional<double> recall;

  std::size_t total() const { return true_positive + false_positive + false_negative + true_negative; }
};

struct VerifierItem {
  std::string reference;
  std::string completion;
  bool oracle_correct = false;
};

ConfusionReport score_verifier(const std::vector<VerifierItem>& corpus);

}  // namespace cooper
