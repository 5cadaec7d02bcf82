#include "cooper/taskworld.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include "cooper/errors.hpp"
#include "cooper/vocab.hpp"
#include "json.hpp"

namespace cooper {

namespace {

constexpr std::uint64_t kTagProblem = fnv1a("problem");
constexpr std::uint64_t kTagRender = fnv1a("render");
constexpr std::uint64_t kTagSplit = fnv1a("split");

std::string fmt_frac(std::int64_t p, std::int64_t q) { return std::to_string(p) + "/" + std::to_string(q); }

const char* op_symbol(Op op) {
  switch (op) {
    case Op::Add:
    case Op::FracAdd:
      return "+";
    case Op::Sub:
      return "-";
    case Op::Mul:
      return "×";
    case Op::Div:
      return "÷";
  }
  return "?";
}

std::vector<std::string> reasoning(Op op, int verbosity) {
  std::vector<std::string> w;
  switch (op) {
    case Op::Add:
      w = {"we", "add", "the", "two", "numbers"};
      break;
    case Op::Sub:
      w = {"we", "subtract", "the", "second", "from", "the", "first"};
      break;
    case Op::Mul:
      w = {"we", "multiply", "the", "two", "numbers"};
      break;
    case Op::Div:
      w = {"we", "divide", "the", "first", "by", "the", "second"};
      break;
    case Op::FracAdd:
      w = {"we", "add", "the", "fractions", "over", "a", "common", "denominator"};
      break;
  }
  if (verbosity >= 2) w.insert(w.end(), {"then", "we", "check", "the", "result"});
  if (verbosity >= 3) w.insert(w.end(), {"and", "check", "the", "value", "carefully"});
  return w;
}

std::size_t digit_count(std::int64_t v) {
  std::size_t n = 1;
  for (v = v < 0 ? -v : v; v >= 10; v /= 10) ++n;
  return n;
}

// A wrong integer with at most `digit_count(v)` digits.
std::int64_t perturb_int(std::int64_t v, SeedStream& rng) {
  const bool neg = v < 0;
  const std::string d = std::to_string(neg ? -v : v);
  const std::size_t len = d.size();
  for (;;) {
    const double u = rng.uniform();
    std::string nd;
    if (len >= 2 && u < 0.35) {
      nd = d.substr(0, len - 1);
    } else if (len >= 2 && u < 0.5) {
      nd = d;
      nd.erase(rng.index(len), 1);
    } else if (u < 0.8) {
      std::int64_t delta = rng.uniform_int(1, 9);
      if (rng.bernoulli(0.5)) delta = -delta;
      const std::int64_t w = v + delta;
      if (digit_count(w) <= len && w != v) return w;
      continue;
    } else {
      nd = d;
      const std::size_t i = rng.index(len);
      nd[i] = static_cast<char>('0' + (nd[i] - '0' + 1 + rng.index(9)) % 10);
    }
    std::int64_t w = 0;
    for (char c : nd) w = w * 10 + (c - '0');
    if (neg) w = -w;
    if (w != v) return w;
  }
}

}  // namespace

std::string_view difficulty_name(Difficulty d) { return d == Difficulty::Easy ? "easy" : "hard"; }

Difficulty parse_difficulty(std::string_view s) {
  if (s == "easy") return Difficulty::Easy;
  if (s == "hard") return Difficulty::Hard;
  throw FormatError("unknown difficulty '" + std::string(s) + "'");
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Heldout:
      return "heldout";
    case Split::Test:
      return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "heldout") return Split::Heldout;
  if (s == "test") return Split::Test;
  throw FormatError("unknown split '" + std::string(s) + "'");
}

std::vector<GeneratorStyle> WorldConfig::default_styles() {
  return {
      {"boxed_clean", Marker::Boxed, 0.02, true, 1},
      {"boxed_plain", Marker::Boxed, 0.35, false, 2},
      {"hash_clean", Marker::HashMark, 0.02, true, 1},
      {"hash_plain", Marker::HashMark, 0.40, false, 2},
      {"answer_is", Marker::AnswerIs, 0.30, false, 1},
      {"answer_is_sloppy", Marker::AnswerIs, 0.55, false, 3},
      {"prose_a", std::nullopt, 0.20, false, 1},
      {"prose_b", std::nullopt, 0.45, false, 2},
  };
}

void WorldConfig::validate() const {
  if (problems == 0) throw ConfigError("world.problems must be positive");
  if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0)) throw ConfigError("world.hard_fraction must lie in [0, 1]");
  if (easy_max < 1 || hard_max < 1 || max_denominator < 2) throw ConfigError("operand ranges too small");
  for (double r : {train_ratio, heldout_ratio, test_ratio})
    if (r < 0.0) throw ConfigError("split ratios must be non-negative");
  if (std::abs(train_ratio + heldout_ratio + test_ratio - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");
  if (styles.empty()) throw ConfigError("at least one generator style is required");
  std::unordered_set<std::string> ids;
  for (const auto& s : styles) {
    if (!ids.insert(s.id).second) throw ConfigError("duplicate style id '" + s.id + "'");
    if (!(s.error_rate >= 0.0 && s.error_rate <= 1.0))
      throw ConfigError("style '" + s.id + "': error_rate must lie in [0, 1]");
    if (s.verbosity < 1 || s.verbosity > 3) throw ConfigError("style '" + s.id + "': verbosity must be 1..3");
  }
}

Problem generate_problem(SeedStream& rng, Difficulty difficulty, const WorldConfig& cfg) {
  Problem p;
  p.difficulty = difficulty;
  if (difficulty == Difficulty::Easy) {
    p.op = rng.bernoulli(0.5) ? Op::Add : Op::Sub;
  } else {
    p.op = static_cast<Op>(rng.index(5));
  }
  const std::int64_t m = difficulty == Difficulty::Easy ? cfg.easy_max : cfg.hard_max;
  const std::int64_t lo = difficulty == Difficulty::Easy ? 0 : -m;
  std::string lhs, rhs;
  switch (p.op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      const std::int64_t a = rng.uniform_int(lo, m), b = rng.uniform_int(lo, m);
      lhs = std::to_string(a);
      rhs = std::to_string(b);
      p.reference = CanonicalAnswer::integer(p.op == Op::Add ? a + b : p.op == Op::Sub ? a - b : a * b);
      break;
    }
    case Op::Div: {
      std::int64_t b = rng.uniform_int(2, std::min<std::int64_t>(m, 30));
      if (rng.bernoulli(0.5)) b = -b;
      const std::int64_t qmax = m / std::abs(b);
      const std::int64_t q = rng.uniform_int(-qmax, qmax);
      lhs = std::to_string(b * q);
      rhs = std::to_string(b);
      p.reference = CanonicalAnswer::integer(q);
      break;
    }
    case Op::FracAdd: {
      const std::int64_t q1 = rng.uniform_int(2, cfg.max_denominator), q2 = rng.uniform_int(2, cfg.max_denominator);
      const std::int64_t p1 = rng.uniform_int(1, q1 - 1), p2 = rng.uniform_int(1, q2 - 1);
      lhs = fmt_frac(p1, q1);
      rhs = fmt_frac(p2, q2);
      const std::int64_t num = p1 * q2 + p2 * q1, den = q1 * q2;
      const std::int64_t g = std::gcd(num, den);
      p.reference = den / g == 1 ? CanonicalAnswer::integer(num / g) : CanonicalAnswer::rational(num, den);
      break;
    }
  }
  p.statement = "Compute " + lhs + " " + op_symbol(p.op) + " " + rhs;
  p.reference_text = render(p.reference);
  return p;
}

std::string perturb_answer(const CanonicalAnswer& reference, SeedStream& rng) {
  if (reference.kind == AnswerKind::Rational) {
    for (;;) {
      const std::int64_t p = perturb_int(reference.num, rng);
      if (!equivalent(reference, CanonicalAnswer::rational(p, reference.den))) return fmt_frac(p, reference.den);
    }
  }
  return std::to_string(perturb_int(reference.num, rng));
}

RenderedTokens render_tokens(const Problem& p, const GeneratorStyle& style, SeedStream& rng) {
  const Vocab& v = Vocab::instance();
  RenderedTokens out;
  out.correct = !rng.bernoulli(style.error_rate);
  out.answer_text = out.correct ? p.reference_text : perturb_answer(p.reference, rng);

  std::vector<std::string> w = reasoning(p.op, style.verbosity);
  std::vector<std::string> answer;
  for (char c : out.answer_text) answer.emplace_back(1, c);
  if (!style.marker) {
    w.insert(w.end(), {"so", "the", "total", "comes", "to"});
    w.insert(w.end(), answer.begin(), answer.end());
    w.emplace_back(".");
  } else {
    switch (*style.marker) {
      case Marker::Boxed:
        w.insert(w.end(), {"so", "the", "result", "is", "\\boxed{"});
        w.insert(w.end(), answer.begin(), answer.end());
        w.insert(w.end(), {"}", "."});
        break;
      case Marker::HashMark:
        w.insert(w.end(), {"so", "the", "result", "is", "\n", "####"});
        w.insert(w.end(), answer.begin(), answer.end());
        break;
      case Marker::AnswerIs:
        w.insert(w.end(), {"so", "the", "answer", "is"});
        w.insert(w.end(), answer.begin(), answer.end());
        w.emplace_back(".");
        break;
    }
  }
  if (style.spurious_phrase) w.insert(w.end(), {"\n", std::string(kSpuriousPhrase)});
  out.ids.reserve(w.size());
  for (const auto& t : w) out.ids.push_back(v.id(t));
  return out;
}

Completion render_completion(const Problem& p, const GeneratorStyle& style, SeedStream& rng) {
  RenderedTokens r = render_tokens(p, style, rng);
  Completion c;
  c.problem_id = p.id;
  c.style_id = style.id;
  c.text = Vocab::instance().decode(r.ids);
  c.answer_text = r.answer_text;
  c.oracle_correct = equivalent(p.reference, canonicalize(r.answer_text));
  return c;
}

std::optional<std::string> last_number(std::string_view text) {
  std::optional<std::string> last;
  auto digit = [&](std::size_t i) { return i < text.size() && text[i] >= '0' && text[i] <= '9'; };
  auto skip_spaces = [&](std::size_t i) {
    while (i < text.size() && text[i] == ' ') ++i;
    return i;
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const bool lead = (text[i] == '-' || text[i] == '.') && digit(i + 1) && (i == 0 || !digit(i - 1));
    if (!digit(i) && !lead) {
      ++i;
      continue;
    }
    const std::size_t b = i;
    if (text[i] == '-') ++i;
    while (digit(i)) ++i;
    if (i < text.size() && text[i] == '.' && digit(i + 1)) {
      ++i;
      while (digit(i)) ++i;
    } else if (std::size_t j = skip_spaces(i); j < text.size() && text[j] == '/') {
      j = skip_spaces(j + 1);
      if (j < text.size() && text[j] == '-') ++j;
      if (digit(j)) {
        i = j;
        while (digit(i)) ++i;
      }
    }
    if (std::size_t j = skip_spaces(i); j < text.size() && text[j] == '%') i = j + 1;
    last = std::string(text.substr(b, i - b));
  }
  return last;
}

bool oracle_correct(const CanonicalAnswer& reference, std::string_view text) {
  auto n = last_number(text);
  return n && equivalent(reference, canonicalize(*n));
}

Corpus build_corpus(const WorldConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Corpus c;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < cfg.problems; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      SeedStream rng(derive_seed(seed, kTagProblem, i, attempt));
      const Difficulty d = rng.bernoulli(cfg.hard_fraction) ? Difficulty::Hard : Difficulty::Easy;
      Problem p = generate_problem(rng, d, cfg);
      if (!seen.insert(p.statement).second) continue;
      char id[16];
      std::snprintf(id, sizeof(id), "p%05zu", i);
      p.id = id;
      c.problems.push_back(std::move(p));
      break;
    }
  }

  const std::size_t n = cfg.problems;
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.train_ratio));
  const auto n_held =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.heldout_ratio)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SeedStream split_rng(derive_seed(seed, kTagSplit));
  split_rng.shuffle(order.begin(), order.end());
  c.problem_split.assign(n, Split::Test);
  for (std::size_t k = 0; k < n; ++k)
    c.problem_split[order[k]] = k < n_train ? Split::Train : k < n_train + n_held ? Split::Heldout : Split::Test;

  c.rows.reserve(n * cfg.styles.size());
  for (std::size_t i = 0; i < n; ++i) {
    const Problem& p = c.problems[i];
    for (std::size_t s = 0; s < cfg.styles.size(); ++s) {
      SeedStream rng(derive_seed(seed, kTagRender, i, s));
      Completion comp = render_completion(p, cfg.styles[s], rng);
      c.rows.push_back(CorpusRow{p.id, p.statement, p.reference_text, std::move(comp.text), comp.style_id,
                                 comp.oracle_correct, c.problem_split[i], p.difficulty});
    }
  }
  return c;
}

nlohmann::ordered_json corpus_row_to_json(const CorpusRow& r) {
  nlohmann::ordered_json j;
  j["problem_id"] = r.problem_id;
  j["statement"] = r.statement;
  j["reference"] = r.reference;
  j["completion"] = r.completion;
  j["style_id"] = r.style_id;
  j["oracle_correct"] = r.oracle_correct;
  j["split"] = split_name(r.split);
  j["difficulty"] = difficulty_name(r.difficulty);
  return j;
}

void write_corpus_jsonl(std::ostream& os, const std::vector<CorpusRow>& rows) {
  for (const auto& r : rows) os << corpus_row_to_json(r).dump() << '\n';
}

CorpusRow corpus_row_from_json(const nlohmann::json& j) {
  CorpusRow r;
  r.problem_id = j.at("problem_id").get<std::string>();
  r.statement = j.at("statement").get<std::string>();
  r.reference = j.at("reference").get<std::string>();
  r.completion = j.at("completion").get<std::string>();
  r.style_id = j.value("style_id", std::string());
  r.oracle_correct = j.at("oracle_correct").get<bool>();
  r.split = parse_split(j.value("split", std::string("train")));
  r.difficulty = parse_difficulty(j.value("difficulty", std::string("easy")));
  return r;
}

std::vector<CorpusRow> read_corpus_jsonl(std::istream& is) {
  std::vector<CorpusRow> rows;
  std::string line;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    if (line.empty()) continue;
    try {
      rows.push_back(corpus_row_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw FormatError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

std::vector<std::pair<Problem, Split>> problems_from_rows(const std::vector<CorpusRow>& rows) {
  std::vector<std::pair<Problem, Split>> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : rows) {
    if (!seen.insert(r.problem_id).second) continue;
    Problem p;
    p.id = r.problem_id;
    p.statement = r.statement;
    p.reference = canonicalize(r.reference);
    p.reference_text = r.reference;
    p.difficulty = r.difficulty;
    if (r.statement.find("×") != std::string::npos) {
      p.op = Op::Mul;
    } else if (r.statement.find("÷") != std::string::npos) {
      p.op = Op::Div;
    } else if (r.statement.find('/') != std::string::npos) {
      p.op = Op::FracAdd;
    } else if (r.statement.find(" - ") != std::string::npos) {
      p.op = Op::Sub;
    } else {
      p.op = Op::Add;
    }
    out.emplace_back(std::move(p), r.split);
  }
  return out;
}

}  // namespace cooper
