#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cooper/rng.hpp"
#include "cooper/verifier.hpp"
#include "json.hpp"

namespace cooper {

enum class Difficulty { Easy, Hard };
enum class Op { Add, Sub, Mul, Div, FracAdd };

std::string_view difficulty_name(Difficulty d);
Difficulty parse_difficulty(std::string_view s);

struct Problem {
  std::string id;
  std::string statement;
  CanonicalAnswer reference;
  std::string reference_text;
  Difficulty difficulty = Difficulty::Easy;
  Op op = Op::Add;
};

struct GeneratorStyle {
  std::string id;
  std::optional<Marker> marker;  // nullopt: unmarked prose
  double error_rate = 0.0;
  bool spurious_phrase = false;
  int verbosity = 1;  // 1..3, number of reasoning clauses
};

struct Completion {
  std::string problem_id;
  std::string text;
  std::string style_id;
  std::string answer_text;  // the renderer's final-answer slot
  bool oracle_correct = false;
};

struct WorldConfig {
  std::size_t problems = 2000;
  double hard_fraction = 0.3;
  std::int64_t easy_max = 99;
  std::int64_t hard_max = 999;
  std::int64_t max_denominator = 9;
  double train_ratio = 0.8;
  double heldout_ratio = 0.1;
  double test_ratio = 0.1;
  std::vector<GeneratorStyle> styles = default_styles();

  static std::vector<GeneratorStyle> default_styles();
  /// Throws ConfigError on bad ratios, empty roster or out-of-range rates.
  void validate() const;
};

Problem generate_problem(SeedStream& rng, Difficulty difficulty, const WorldConfig& cfg = {});

/// A wrong answer with no more digits than the reference: truncations,
/// dropped or replaced digits and small offsets.
std::string perturb_answer(const CanonicalAnswer& reference, SeedStream& rng);

/// Token ids of a completion; decode() of them is Completion::text.
struct RenderedTokens {
  std::vector<int> ids;
  std::string answer_text;
  bool correct = false;
};
RenderedTokens render_tokens(const Problem& p, const GeneratorStyle& style, SeedStream& rng);
Completion render_completion(const Problem& p, const GeneratorStyle& style, SeedStream& rng);

/// Ground truth for free-form text: the last numeric literal written must
/// equal the reference exactly. A literal is an optionally signed integer,
/// decimal or p/q, optionally followed by '%'. Independent of the rule
/// verifier's markers.
std::optional<std::string> last_number(std::string_view text);
bool oracle_correct(const CanonicalAnswer& reference, std::string_view text);

enum class Split { Train, Heldout, Test };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct CorpusRow {
  std::string problem_id;
  std::string statement;
  std::string reference;
  std::string completion;
  std::string style_id;
  bool oracle_correct = false;
  Split split = Split::Train;
  Difficulty difficulty = Difficulty::Easy;
};

struct Corpus {
  std::vector<Problem> problems;
  std::vector<Split> problem_split;  // parallel to problems
  std::vector<CorpusRow> rows;       // problem-major, styles in roster order
};

Corpus build_corpus(const WorldConfig& cfg, std::uint64_t seed);

nlohmann::ordered_json corpus_row_to_json(const CorpusRow& r);
CorpusRow corpus_row_from_json(const nlohmann::json& j);

void write_corpus_jsonl(std::ostream& os, const std::vector<CorpusRow>& rows);
/// Throws FormatError naming the line on malformed input.
std::vector<CorpusRow> read_corpus_jsonl(std::istream& is);

/// Rebuilds Problems (id, statement, reference, difficulty, split) from rows.
std::vector<std::pair<Problem, Split>> problems_from_rows(const std::vector<CorpusRow>& rows);

}  // namespace cooper
