#include "cooper/annotate.hpp"

#include <istream>
#include <ostream>

#include "cooper/errors.hpp"
#include "cooper/http_json.hpp"

namespace cooper {

namespace {

constexpr std::uint64_t kTagJudge = fnv1a("judge");

void tally(AgreementReport& r, bool rule_correct, bool judge_correct) {
  if (rule_correct) {
    ++(judge_correct ? r.rule_correct_judge_correct : r.rule_correct_judge_incorrect);
  } else {
    ++(judge_correct ? r.rule_incorrect_judge_correct : r.rule_incorrect_judge_incorrect);
  }
}

Outcome parse_outcome(const std::string& s) {
  if (s == "correct") return Outcome::Correct;
  if (s == "incorrect") return Outcome::Incorrect;
  if (s == "unparseable") return Outcome::Unparseable;
  throw FormatError("unknown rule verdict '" + s + "'");
}

// Returns nullopt if the external judge failed.
std::optional<AnnotatedRow> annotate_one(const CorpusRow& row, const JudgeConfig& cfg, std::uint64_t seed) {
  AnnotatedRow a;
  a.row = row;
  const Verdict v = rule_verdict(row.reference, row.completion);
  a.rule = v.outcome;
  SeedStream rng = row_stream(seed, row);
  try {
    a.judge = judge_verdict(cfg, row, rng).correct;
  } catch (const EndpointError&) {
    return std::nullopt;
  }
  a.label = hybrid_label(v, JudgeVerdict{a.judge, cfg.kind});
  return a;
}

}  // namespace

SeedStream row_stream(std::uint64_t seed, const CorpusRow& row) {
  std::uint64_t h = fnv1a(row.problem_id);
  h = fnv1a("\x1f", h);
  h = fnv1a(row.style_id, h);
  h = fnv1a("\x1f", h);
  h = fnv1a(row.completion, h);
  return SeedStream(derive_seed(seed, kTagJudge, h));
}

JudgeVerdict judge_verdict(const JudgeConfig& cfg, const CorpusRow& row, SeedStream& rng) {
  if (cfg.kind == JudgeKind::External) {
    const nlohmann::json reply = post_json(
        cfg.endpoint, {{"statement", row.statement}, {"reference", row.reference}, {"completion", row.completion}},
        cfg.timeout_seconds);
    if (!reply.contains("correct") || !reply["correct"].is_boolean())
      throw EndpointError("judge reply lacks a boolean 'correct' field");
    return {reply["correct"].get<bool>(), JudgeKind::External};
  }
  const double u = rng.uniform();
  const bool flip = row.oracle_correct ? u < cfg.fn_rate : u < cfg.fp_rate;
  return {row.oracle_correct != flip, JudgeKind::NoisyOracle};
}

std::optional<int> hybrid_label(const Verdict& rule, const JudgeVerdict& judge) {
  if (rule.correct() && judge.correct) return 1;
  if (!rule.correct() && !judge.correct) return 0;
  return std::nullopt;
}

std::optional<double> AgreementReport::agreement_rate() const {
  if (judged() == 0) return std::nullopt;
  return static_cast<double>(retained()) / static_cast<double>(judged());
}

nlohmann::json AgreementReport::to_json() const {
  nlohmann::ordered_json j;
  j["rule_correct_judge_correct"] = rule_correct_judge_correct;
  j["rule_correct_judge_incorrect"] = rule_correct_judge_incorrect;
  j["rule_incorrect_judge_correct"] = rule_incorrect_judge_correct;
  j["rule_incorrect_judge_incorrect"] = rule_incorrect_judge_incorrect;
  j["judged"] = judged();
  j["retained"] = retained();
  j["malformed"] = malformed;
  j["judge_errors"] = judge_errors;
  const auto rate = agreement_rate();
  j["agreement_rate"] = rate ? nlohmann::json(*rate) : nlohmann::json(nullptr);
  return j;
}

AnnotationResult annotate_rows(const std::vector<CorpusRow>& rows, const JudgeConfig& cfg, std::uint64_t seed) {
  AnnotationResult res;
  for (const auto& row : rows) {
    auto a = annotate_one(row, cfg, seed);
    if (!a) {
      ++res.report.judge_errors;
      continue;
    }
    tally(res.report, a->rule == Outcome::Correct, a->judge);
    (a->label ? res.retained : res.disagreements).push_back(std::move(*a));
  }
  return res;
}

AgreementReport annotate_stream(std::istream& corpus, std::ostream& retained, std::ostream& sidecar,
                                const JudgeConfig& cfg, std::uint64_t seed) {
  AgreementReport report;
  std::string line;
  while (std::getline(corpus, line)) {
    if (line.empty()) continue;
    CorpusRow row;
    try {
      row = corpus_row_from_json(nlohmann::json::parse(line));
    } catch (const std::exception&) {
      ++report.malformed;
      continue;
    }
    auto a = annotate_one(row, cfg, seed);
    if (!a) {
      ++report.judge_errors;
      continue;
    }
    tally(report, a->rule == Outcome::Correct, a->judge);
    (a->label ? retained : sidecar) << annotated_row_to_json(*a).dump() << '\n';
  }
  return report;
}

nlohmann::ordered_json annotated_row_to_json(const AnnotatedRow& r) {
  nlohmann::ordered_json j = corpus_row_to_json(r.row);
  j["label"] = r.label ? nlohmann::ordered_json(*r.label) : nlohmann::ordered_json(nullptr);
  j["rule_verdict"] = outcome_name(r.rule);
  j["judge_verdict"] = r.judge;
  return j;
}

void write_annotated_jsonl(std::ostream& os, const std::vector<AnnotatedRow>& rows) {
  for (const auto& r : rows) os << annotated_row_to_json(r).dump() << '\n';
}

std::vector<AnnotatedRow> read_annotated_jsonl(std::istream& is) {
  std::vector<AnnotatedRow> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      AnnotatedRow a;
      a.row = corpus_row_from_json(j);
      a.rule = parse_outcome(j.at("rule_verdict").get<std::string>());
      a.judge = j.at("judge_verdict").get<bool>();
      if (!j.at("label").is_null()) a.label = j.at("label").get<int>();
      out.push_back(std::move(a));
    } catch (const std::exception& e) {
      throw FormatError("annotated line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<AnnotatedExample> hybrid_examples(const std::vector<AnnotatedRow>& rows, std::optional<Split> split) {
  std::vector<AnnotatedExample> out;
  for (const auto& a : rows) {
    if (!a.label || (split && a.row.split != *split)) continue;
    out.push_back({a.row.problem_id, a.row.statement, a.row.reference, a.row.completion, *a.label,
                   LabelProvenance::HybridAgreed});
  }
  return out;
}

std::vector<AnnotatedExample> oracle_examples(const std::vector<CorpusRow>& rows, std::optional<Split> split) {
  std::vector<AnnotatedExample> out;
  for (const auto& r : rows) {
    if (split && r.split != *split) continue;
    out.push_back({r.problem_id, r.statement, r.reference, r.completion, r.oracle_correct ? 1 : 0,
                   LabelProvenance::Oracle});
  }
  return out;
}

}  // namespace cooper
