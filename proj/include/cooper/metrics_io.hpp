#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cooper/policy.hpp"
#include "cooper/taskworld.hpp"
#include "json.hpp"

namespace cooper {

inline constexpr int kMetricsFormatVersion = 1;

/// One row per training step. Optional fields are written as empty cells.
struct MetricsRecord {
  std::string run_id;
  std::string mode;
  int outer_iteration = 0;
  int step = 0;
  double mean_train_reward = 0.0;  // proxy reward actually optimized
  double oracle_train_accuracy = 0.0;
  double rule_train_accuracy = 0.0;
  std::optional<double> oracle_test_accuracy;
  std::optional<double> rule_test_accuracy;
  std::optional<double> rm_heldout_accuracy;
  std::optional<double> rm_phrase_effect;
  double mean_kl = 0.0;
  double pair_mask_rate = 0.0;
  int valid_pairs = 0;
  int pair_oracle_violations = 0;
  double spurious_phrase_rate = 0.0;
  double wall_time = 0.0;  // seconds since run start; 0 unless enabled

  bool operator==(const MetricsRecord&) const = default;
};

/// Column names in file order.
const std::vector<std::string>& metrics_columns();

/// Writes the version line and header.
void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const MetricsRecord& r);
void write_metrics_csv(std::ostream& os, const std::vector<MetricsRecord>& records);
/// Throws FormatError on a version or header mismatch (naming any unknown
/// column) and on malformed rows.
std::vector<MetricsRecord> read_metrics_csv(std::istream& is);

struct EvalReport {
  std::size_t problems = 0;
  int k = 0;
  std::size_t draws = 0;
  std::size_t oracle_correct = 0;
  std::size_t rule_correct = 0;

  double accuracy() const;
  double rule_accuracy() const;
  nlohmann::json to_json() const;
};

/// k samples per problem; accuracy is judged by the oracle, with the rule
/// verdict reported alongside. Throws std::invalid_argument if k < 1.
EvalReport evaluate_policy(const Policy& policy, const std::vector<Problem>& problems, int k,
                           const SamplingConfig& sc, std::uint64_t seed);

/// Everything needed to re-run: the resolved config, its hash, the master
/// seed and the on-disk format versions.
nlohmann::ordered_json make_manifest(const nlohmann::json& resolved_config, std::uint64_t seed,
                                     const std::string& subcommand);

/// Per-run summary. "final_*" values average the records of the last outer
/// iteration; test accuracy is the last one recorded.
struct RunSummary {
  std::string run_id;
  std::string mode;
  int steps = 0;
  double final_proxy_reward = 0.0;
  double final_oracle_train_accuracy = 0.0;
  double final_gap = 0.0;  // proxy - oracle train accuracy
  std::optional<double> final_oracle_test_accuracy;
  std::optional<double> final_rm_heldout_accuracy;
  double max_pair_mask_rate = 0.0;
  int pair_oracle_violations = 0;

  nlohmann::ordered_json to_json() const;
};

/// Groups records by run_id in order of first appearance.
std::vector<RunSummary> summarize(const std::vector<MetricsRecord>& records);

/// gnuplot data: one block per run (separated by two blank lines) with
/// columns step, proxy reward, oracle train accuracy, oracle test accuracy
/// (NaN where not evaluated).
void write_gnuplot_data(std::ostream& os, const std::vector<MetricsRecord>& records);

}  // namespace cooper
