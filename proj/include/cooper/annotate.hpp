#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cooper/rewardmodel.hpp"
#include "cooper/rng.hpp"
#include "cooper/taskworld.hpp"
#include "cooper/verifier.hpp"
#include "json.hpp"

namespace cooper {

enum class JudgeKind { NoisyOracle, External };

struct JudgeConfig {
  JudgeKind kind = JudgeKind::NoisyOracle;
  double fp_rate = 0.10;  // P(judge says correct | oracle incorrect)
  double fn_rate = 0.01;  // P(judge says incorrect | oracle correct)
  std::string endpoint;   // External only
  int timeout_seconds = 10;
};

struct JudgeVerdict {
  bool correct = false;
  JudgeKind kind = JudgeKind::NoisyOracle;
};

/// NoisyOracle flips row.oracle_correct with the configured rates using `rng`;
/// External POSTs {statement, reference, completion} and reads {correct}.
/// Throws EndpointError if the external judge fails.
JudgeVerdict judge_verdict(const JudgeConfig& cfg, const CorpusRow& row, SeedStream& rng);

/// Per-row stream derived from the row content, so verdicts do not depend on
/// corpus order.
SeedStream row_stream(std::uint64_t seed, const CorpusRow& row);

/// 1 when both say correct, 0 when both say incorrect (Unparseable counts as
/// incorrect), nullopt on disagreement.
std::optional<int> hybrid_label(const Verdict& rule, const JudgeVerdict& judge);

struct AgreementReport {
  std::size_t rule_correct_judge_correct = 0;
  std::size_t rule_correct_judge_incorrect = 0;
  std::size_t rule_incorrect_judge_correct = 0;
  std::size_t rule_incorrect_judge_incorrect = 0;
  std::size_t malformed = 0;     // unreadable input lines, skipped
  std::size_t judge_errors = 0;  // external judge failures, skipped

  std::size_t judged() const {
    return rule_correct_judge_correct + rule_correct_judge_incorrect + rule_incorrect_judge_correct +
           rule_incorrect_judge_incorrect;
  }
  std::size_t retained() const { return rule_correct_judge_correct + rule_incorrect_judge_incorrect; }
  /// Absent when nothing was judged.
  std::optional<double> agreement_rate() const;
  nlohmann::json to_json() const;
  bool operator==(const AgreementReport&) const = default;
};

struct AnnotatedRow {
  CorpusRow row;
  Outcome rule = Outcome::Unparseable;
  bool judge = false;
  std::optional<int> label;
};

struct AnnotationResult {
  std::vector<AnnotatedRow> retained;
  std::vector<AnnotatedRow> disagreements;
  AgreementReport report;
};

AnnotationResult annotate_rows(const std::vector<CorpusRow>& rows, const JudgeConfig& cfg, std::uint64_t seed);

/// Streams corpus JSONL; malformed lines are counted and skipped. Retained rows
/// go to `retained`, disagreements to `sidecar`.
AgreementReport annotate_stream(std::istream& corpus, std::ostream& retained, std::ostream& sidecar,
                                const JudgeConfig& cfg, std::uint64_t seed);

nlohmann::ordered_json annotated_row_to_json(const AnnotatedRow& r);
void write_annotated_jsonl(std::ostream& os, const std::vector<AnnotatedRow>& rows);
/// Reads rows written by write_annotated_jsonl. Throws FormatError.
std::vector<AnnotatedRow> read_annotated_jsonl(std::istream& is);

/// Reward-model examples labeled by the hybrid label.
std::vector<AnnotatedExample> hybrid_examples(const std::vector<AnnotatedRow>& rows, std::optional<Split> split);
/// Reward-model examples labeled by the oracle.
std::vector<AnnotatedExample> oracle_examples(const std::vector<CorpusRow>& rows, std::optional<Split> split);

}  // namespace cooper
