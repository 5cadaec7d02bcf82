#include "cooper/metrics_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cooper/errors.hpp"
#include "cooper/rng.hpp"
#include "cooper/verifier.hpp"

namespace cooper {

namespace {

constexpr std::uint64_t kTagEval = fnv1a("evaluate");

const char* const kVersionLine = "#cooper-metrics 1";

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

double parse_double(const std::string& s, const std::string& col) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw FormatError("metrics: bad number '" + s + "' in column " + col);
  return v;
}

int parse_int(const std::string& s, const std::string& col) {
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw FormatError("metrics: bad integer '" + s + "' in column " + col);
  return v;
}

std::optional<double> parse_opt(const std::string& s, const std::string& col) {
  if (s.empty()) return std::nullopt;
  return parse_double(s, col);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

void check_text(const std::string& s, const char* what) {
  if (s.find_first_of(",\n\r\"") != std::string::npos)
    throw std::invalid_argument(std::string("metrics: ") + what + " must not contain commas, quotes or newlines");
}

double mean_of(const std::vector<const MetricsRecord*>& rs, double MetricsRecord::*field) {
  double s = 0.0;
  for (const auto* r : rs) s += r->*field;
  return rs.empty() ? 0.0 : s / static_cast<double>(rs.size());
}

}  // namespace

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "run_id",          "mode",           "outer_iteration",     "step",
      "mean_train_reward", "oracle_train_accuracy", "rule_train_accuracy", "oracle_test_accuracy",
      "rule_test_accuracy", "rm_heldout_accuracy", "rm_phrase_effect", "mean_kl",
      "pair_mask_rate",  "valid_pairs",    "pair_oracle_violations", "spurious_phrase_rate",
      "wall_time"};
  return cols;
}

void write_metrics_header(std::ostream& os) {
  os << kVersionLine << '\n';
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
}

void write_metrics_row(std::ostream& os, const MetricsRecord& r) {
  check_text(r.run_id, "run_id");
  check_text(r.mode, "mode");
  os << r.run_id << ',' << r.mode << ',' << r.outer_iteration << ',' << r.step << ',' << fmt(r.mean_train_reward)
     << ',' << fmt(r.oracle_train_accuracy) << ',' << fmt(r.rule_train_accuracy) << ','
     << fmt(r.oracle_test_accuracy) << ',' << fmt(r.rule_test_accuracy) << ',' << fmt(r.rm_heldout_accuracy) << ','
     << fmt(r.rm_phrase_effect) << ',' << fmt(r.mean_kl) << ',' << fmt(r.pair_mask_rate) << ',' << r.valid_pairs
     << ',' << r.pair_oracle_violations << ',' << fmt(r.spurious_phrase_rate) << ',' << fmt(r.wall_time) << '\n';
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRecord>& records) {
  write_metrics_header(os);
  for (const auto& r : records) write_metrics_row(os, r);
}

std::vector<MetricsRecord> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("metrics: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kVersionLine)
    throw FormatError("metrics: expected version line '" + std::string(kVersionLine) + "', got '" + line + "'");
  if (!std::getline(is, line)) throw FormatError("metrics: missing header");
  const auto header = split_csv(line);
  const auto& cols = metrics_columns();
  for (const auto& h : header) {
    if (std::find(cols.begin(), cols.end(), h) == cols.end())
      throw FormatError("metrics: unknown column '" + h + "'");
  }
  if (header != cols) throw FormatError("metrics: header does not match format version 1");
  std::vector<MetricsRecord> out;
  for (std::size_t lineno = 3; std::getline(is, line); ++lineno) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != cols.size())
      throw FormatError("metrics line " + std::to_string(lineno) + ": expected " + std::to_string(cols.size()) +
                        " fields, got " + std::to_string(f.size()));
    MetricsRecord r;
    std::size_t i = 0;
    r.run_id = f[i++];
    r.mode = f[i++];
    r.outer_iteration = parse_int(f[i], cols[i]); ++i;
    r.step = parse_int(f[i], cols[i]); ++i;
    r.mean_train_reward = parse_double(f[i], cols[i]); ++i;
    r.oracle_train_accuracy = parse_double(f[i], cols[i]); ++i;
    r.rule_train_accuracy = parse_double(f[i], cols[i]); ++i;
    r.oracle_test_accuracy = parse_opt(f[i], cols[i]); ++i;
    r.rule_test_accuracy = parse_opt(f[i], cols[i]); ++i;
    r.rm_heldout_accuracy = parse_opt(f[i], cols[i]); ++i;
    r.rm_phrase_effect = parse_opt(f[i], cols[i]); ++i;
    r.mean_kl = parse_double(f[i], cols[i]); ++i;
    r.pair_mask_rate = parse_double(f[i], cols[i]); ++i;
    r.valid_pairs = parse_int(f[i], cols[i]); ++i;
    r.pair_oracle_violations = parse_int(f[i], cols[i]); ++i;
    r.spurious_phrase_rate = parse_double(f[i], cols[i]); ++i;
    r.wall_time = parse_double(f[i], cols[i]);
    out.push_back(std::move(r));
  }
  return out;
}

double EvalReport::accuracy() const {
  return draws ? static_cast<double>(oracle_correct) / static_cast<double>(draws) : 0.0;
}

double EvalReport::rule_accuracy() const {
  return draws ? static_cast<double>(rule_correct) / static_cast<double>(draws) : 0.0;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["problems"] = problems;
  j["k"] = k;
  j["draws"] = draws;
  j["oracle_correct"] = oracle_correct;
  j["rule_correct"] = rule_correct;
  j["accuracy"] = accuracy();
  j["rule_accuracy"] = rule_accuracy();
  return j;
}

EvalReport evaluate_policy(const Policy& policy, const std::vector<Problem>& problems, int k,
                           const SamplingConfig& sc, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("evaluate_policy: k must be >= 1");
  EvalReport rep;
  rep.problems = problems.size();
  rep.k = k;
  std::vector<std::vector<int>> prompts;
  prompts.reserve(problems.size());
  for (const auto& p : problems) prompts.push_back(encode_prompt(p.statement));
  std::vector<const std::vector<int>*> refs;
  std::vector<SeedStream> rngs;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    for (int j = 0; j < k; ++j) {
      refs.push_back(&prompts[i]);
      rngs.emplace_back(derive_seed(seed, kTagEval, i, static_cast<std::uint64_t>(j)));
      owner.push_back(i);
    }
  }
  const auto outs = sample_responses(policy, refs, sc, rngs);
  for (std::size_t r = 0; r < outs.size(); ++r) {
    const Problem& p = problems[owner[r]];
    ++rep.draws;
    if (oracle_correct(p.reference, outs[r].text)) ++rep.oracle_correct;
    if (rule_verdict(p.reference_text, outs[r].text).correct()) ++rep.rule_correct;
  }
  return rep;
}

nlohmann::ordered_json make_manifest(const nlohmann::json& resolved_config, std::uint64_t seed,
                                     const std::string& subcommand) {
  nlohmann::ordered_json m;
  m["subcommand"] = subcommand;
  m["master_seed"] = seed;
  m["config"] = resolved_config;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(resolved_config.dump())));
  m["config_hash"] = hash;
  m["formats"] = {{"metrics_csv", kMetricsFormatVersion}, {"checkpoint", 1}, {"jsonl", 1}};
  return m;
}

nlohmann::ordered_json RunSummary::to_json() const {
  nlohmann::ordered_json j;
  j["run_id"] = run_id;
  j["mode"] = mode;
  j["steps"] = steps;
  j["final_proxy_reward"] = final_proxy_reward;
  j["final_oracle_train_accuracy"] = final_oracle_train_accuracy;
  j["final_gap"] = final_gap;
  j["final_oracle_test_accuracy"] =
      final_oracle_test_accuracy ? nlohmann::ordered_json(*final_oracle_test_accuracy) : nlohmann::ordered_json();
  j["final_rm_heldout_accuracy"] =
      final_rm_heldout_accuracy ? nlohmann::ordered_json(*final_rm_heldout_accuracy) : nlohmann::ordered_json();
  j["max_pair_mask_rate"] = max_pair_mask_rate;
  j["pair_oracle_violations"] = pair_oracle_violations;
  return j;
}

std::vector<RunSummary> summarize(const std::vector<MetricsRecord>& records) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const MetricsRecord*>> by_run;
  for (const auto& r : records) {
    auto& v = by_run[r.run_id];
    if (v.empty()) order.push_back(r.run_id);
    v.push_back(&r);
  }
  std::vector<RunSummary> out;
  for (const auto& id : order) {
    const auto& rs = by_run[id];
    RunSummary s;
    s.run_id = id;
    s.mode = rs.front()->mode;
    s.steps = static_cast<int>(rs.size());
    const int last_iter = rs.back()->outer_iteration;
    std::vector<const MetricsRecord*> tail;
    for (const auto* r : rs) {
      if (r->outer_iteration == last_iter) tail.push_back(r);
      if (r->oracle_test_accuracy) s.final_oracle_test_accuracy = r->oracle_test_accuracy;
      if (r->rm_heldout_accuracy) s.final_rm_heldout_accuracy = r->rm_heldout_accuracy;
      s.max_pair_mask_rate = std::max(s.max_pair_mask_rate, r->pair_mask_rate);
      s.pair_oracle_violations += r->pair_oracle_violations;
    }
    s.final_proxy_reward = mean_of(tail, &MetricsRecord::mean_train_reward);
    s.final_oracle_train_accuracy = mean_of(tail, &MetricsRecord::oracle_train_accuracy);
    s.final_gap = s.final_proxy_reward - s.final_oracle_train_accuracy;
    out.push_back(std::move(s));
  }
  return out;
}

void write_gnuplot_data(std::ostream& os, const std::vector<MetricsRecord>& records) {
  std::string current;
  bool first = true;
  for (const auto& r : records) {
    if (first || r.run_id != current) {
      if (!first) os << "\n\n";
      os << "# run " << r.run_id << " mode " << r.mode << "\n# step proxy_reward oracle_train_accuracy "
         << "oracle_test_accuracy\n";
      current = r.run_id;
      first = false;
    }
    os << r.step << ' ' << fmt(r.mean_train_reward) << ' ' << fmt(r.oracle_train_accuracy) << ' '
       << (r.oracle_test_accuracy ? fmt(*r.oracle_test_accuracy) : std::string("NaN")) << '\n';
  }
}

}  // namespace cooper
