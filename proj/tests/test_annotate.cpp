#include <algorithm>
#include <map>
#include <sstream>

#include "cooper/annotate.hpp"
#include "cooper/errors.hpp"
#include "doctest.h"

using namespace cooper;

namespace {

std::vector<CorpusRow> corpus_rows(std::uint64_t seed, std::size_t problems) {
  WorldConfig w;
  w.problems = problems;
  return build_corpus(w, seed).rows;
}

double error_rate(const std::vector<AnnotatedRow>& rows) {
  std::size_t wrong = 0;
  for (const auto& a : rows) wrong += (*a.label == 1) != a.row.oracle_correct;
  return static_cast<double>(wrong) / static_cast<double>(rows.size());
}

}  // namespace

TEST_CASE("hybrid label keeps agreements only") {
  const Verdict yes{Outcome::Correct, {}, {}}, no{Outcome::Incorrect, {}, {}}, none{};
  CHECK(hybrid_label(yes, {true}) == 1);
  CHECK(hybrid_label(no, {false}) == 0);
  CHECK(hybrid_label(none, {false}) == 0);
  CHECK_FALSE(hybrid_label(yes, {false}));
  CHECK_FALSE(hybrid_label(none, {true}));
}

TEST_CASE("perfect judge gives error-free retained labels") {
  JudgeConfig perfect;
  perfect.fp_rate = 0.0;
  perfect.fn_rate = 0.0;
  const auto res = annotate_rows(corpus_rows(1, 300), perfect, 1);
  CHECK(error_rate(res.retained) == 0.0);
  CHECK(res.report.rule_correct_judge_incorrect == 0);
}

TEST_CASE("agreement filtering beats the standalone noisy judge") {
  for (std::uint64_t seed : {1u, 2u}) {
    const auto rows = corpus_rows(seed, 400);
    const auto res = annotate_rows(rows, {}, seed);
    std::size_t judge_wrong = 0;
    for (const auto& a : res.retained) judge_wrong += a.judge != a.row.oracle_correct;
    for (const auto& a : res.disagreements) judge_wrong += a.judge != a.row.oracle_correct;
    const double judge_err = static_cast<double>(judge_wrong) / static_cast<double>(rows.size());
    CHECK(error_rate(res.retained) < judge_err);
    CHECK(res.report.judged() == rows.size());
    CHECK(res.report.retained() == res.retained.size());
    REQUIRE(res.report.agreement_rate());
  }
}

TEST_CASE("judge draws depend on the row, not its position") {
  auto rows = corpus_rows(3, 50);
  const auto a = annotate_rows(rows, {}, 3);
  std::reverse(rows.begin(), rows.end());
  const auto b = annotate_rows(rows, {}, 3);
  std::map<std::string, bool> first;
  for (const auto* set : {&a.retained, &a.disagreements})
    for (const auto& r : *set) first[r.row.problem_id + r.row.style_id] = r.judge;
  for (const auto* set : {&b.retained, &b.disagreements})
    for (const auto& r : *set) CHECK(first.at(r.row.problem_id + r.row.style_id) == r.judge);
}

TEST_CASE("stream annotation matches the in-memory path and skips malformed lines") {
  const auto rows = corpus_rows(4, 40);
  std::stringstream in;
  write_corpus_jsonl(in, rows);
  in << "not json\n";
  std::stringstream kept, side;
  const AgreementReport rep = annotate_stream(in, kept, side, {}, 4);
  CHECK(rep.malformed == 1);
  const auto back = read_annotated_jsonl(kept);
  const auto mem = annotate_rows(rows, {}, 4);
  REQUIRE(back.size() == mem.retained.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].label == mem.retained[i].label);
    CHECK(back[i].rule == mem.retained[i].rule);
  }
  CHECK(read_annotated_jsonl(side).size() == mem.disagreements.size());
  CHECK(hybrid_examples(back, Split::Train).size() + hybrid_examples(back, Split::Heldout).size() +
            hybrid_examples(back, Split::Test).size() ==
        back.size());
}

TEST_CASE("unreachable external judge counts as a judge error") {
  JudgeConfig ext;
  ext.kind = JudgeKind::External;
  ext.endpoint = "http://127.0.0.1:1/judge";
  ext.timeout_seconds = 1;
  const auto res = annotate_rows(corpus_rows(5, 2), ext, 5);
  CHECK(res.report.judge_errors == 16);
  CHECK(res.retained.empty());
}
