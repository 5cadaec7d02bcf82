#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cooper/annotate.hpp"
#include "cooper/checkpoint.hpp"
#include "cooper/config.hpp"
#include "cooper/cooper.hpp"
#include "cooper/errors.hpp"
#include "cooper/http_json.hpp"
#include "cooper/metrics_io.hpp"
#include "cooper/model_io.hpp"
#include "cooper/pipeline.hpp"
#include "cooper/verifier.hpp"

namespace fs = std::filesystem;
using namespace cooper;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string out_dir = "run";
  int workers = 1;
};

struct Paths {
  std::string corpus, annotated, rm_ckpt, policy_ckpt;
  std::vector<std::string> metrics_files;
};

struct Extra {
  std::string mode, judge_endpoint, assistant_endpoint;
  std::optional<int> epochs, batch, k;
  std::optional<double> lr;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "master seed");
  sub->add_option("--set", c.sets, "config override key=value (repeatable)");
  sub->add_option("--out-dir", c.out_dir, "run directory for outputs")->capture_default_str();
  sub->add_option("--workers", c.workers, "worker count (runs are sequential; accepted for compatibility)")
      ->check(CLI::PositiveNumber);
}

std::ifstream open_in(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing --") + what);
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string("cannot open ") + what + " file " + path);
  return in;
}

class RunDir {
 public:
  explicit RunDir(const std::string& dir) : dir_(dir) { fs::create_directories(dir_); }
  fs::path path(const std::string& name) const { return dir_ / name; }
  std::ofstream open(const std::string& name) const {
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path(name).string());
    return out;
  }
  void write_json(const std::string& name, const nlohmann::ordered_json& j) const { open(name) << j.dump(2) << '\n'; }

 private:
  fs::path dir_;
};

RunConfig resolve(const Common& c, const Extra& x) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  if (!x.mode.empty()) cfg.train.mode = parse_reward_mode(x.mode);
  if (!x.judge_endpoint.empty()) {
    cfg.judge.kind = JudgeKind::External;
    cfg.judge.endpoint = x.judge_endpoint;
  }
  if (x.epochs) cfg.rm.epochs = *x.epochs;
  if (x.batch) cfg.rm.batch = *x.batch;
  if (x.lr) cfg.rm.lr = *x.lr;
  if (x.k) cfg.train.eval_k = *x.k;
  cfg.validate();
  return cfg;
}

nlohmann::ordered_json echo(const std::string& sub, const RunConfig& cfg, const Common& c,
                            const nlohmann::ordered_json& inputs) {
  nlohmann::ordered_json j;
  j["subcommand"] = sub;
  j["config"] = cfg.to_json();
  j["inputs"] = inputs;
  j["out_dir"] = c.out_dir;
  j["workers"] = c.workers;
  std::cerr << j.dump(2) << '\n';
  return j;
}

void write_manifest(const RunDir& dir, const std::string& sub, const RunConfig& cfg,
                    const nlohmann::ordered_json& inputs) {
  auto m = make_manifest(cfg.to_json(), cfg.seed, sub);
  m["inputs"] = inputs;
  dir.write_json("manifest.json", m);
}

std::vector<CorpusRow> load_corpus(const std::string& path) {
  auto in = open_in(path, "corpus");
  return read_corpus_jsonl(in);
}

int cmd_gen_data(const Common& c, const Extra& x) {
  const RunConfig cfg = resolve(c, x);
  echo("gen-data", cfg, c, nlohmann::ordered_json::object());
  RunDir dir(c.out_dir);
  const Corpus corpus = build_corpus(cfg.world, cfg.seed);
  auto out = dir.open("corpus.jsonl");
  write_corpus_jsonl(out, corpus.rows);
  write_manifest(dir, "gen-data", cfg, nlohmann::ordered_json::object());
  std::cerr << "wrote " << corpus.rows.size() << " rows to " << dir.path("corpus.jsonl").string() << '\n';
  return 0;
}

int cmd_annotate(const Common& c, const Paths& p, const Extra& x) {
  const RunConfig cfg = resolve(c, x);
  const nlohmann::ordered_json inputs = {{"corpus", p.corpus}};
  echo("annotate", cfg, c, inputs);
  auto in = open_in(p.corpus, "corpus");
  RunDir dir(c.out_dir);
  auto retained = dir.open("annotated.jsonl");
  auto sidecar = dir.open("disagreements.jsonl");
  const AgreementReport report = annotate_stream(in, retained, sidecar, cfg.judge, cfg.seed);
  dir.write_json("agreement.json", report.to_json());
  write_manifest(dir, "annotate", cfg, inputs);
  std::cout << report.to_json().dump() << '\n';
  return 0;
}

int cmd_train_rm(const Common& c, const Paths& p, const Extra& x) {
  const RunConfig cfg = resolve(c, x);
  const nlohmann::ordered_json inputs = {{"annotated", p.annotated}};
  echo("train-rm", cfg, c, inputs);
  auto in = open_in(p.annotated, "annotated");
  const auto rows = read_annotated_jsonl(in);
  const RMTraining t = train_reward_model(cfg, rows);
  RunDir dir(c.out_dir);
  save_checkpoint(dir.path("rm.ckpt"), rm_checkpoint(t.rm), false);
  nlohmann::ordered_json rep;
  rep["train_rows"] = t.train_rows;
  rep["heldout_rows"] = t.heldout_rows;
  rep["heldout_accuracy"] = t.pretrain.heldout_accuracy;
  rep["majority_baseline"] = t.majority_baseline;
  rep["final_loss"] = t.pretrain.final_loss;
  rep["epoch_loss"] = t.pretrain.epoch_loss;
  dir.write_json("rm_report.json", rep);
  write_manifest(dir, "train-rm", cfg, inputs);
  std::cout << rep.dump() << '\n';
  return 0;
}

int cmd_train(const Common& c, const Paths& p, const Extra& x) {
  const RunConfig cfg = resolve(c, x);
  if (cfg.train.mode != RewardMode::Rule && p.rm_ckpt.empty())
    throw ConfigError("--mode " + std::string(reward_mode_name(cfg.train.mode)) + " requires --rm-checkpoint");
  const nlohmann::ordered_json inputs = {
      {"corpus", p.corpus}, {"rm_checkpoint", p.rm_ckpt}, {"policy_checkpoint", p.policy_ckpt}};
  echo("train", cfg, c, inputs);
  const auto rows = load_corpus(p.corpus);
  std::optional<RewardModel> rm;
  if (cfg.train.mode != RewardMode::Rule) rm = rm_from_checkpoint(load_checkpoint(p.rm_ckpt));
  RunDir dir(c.out_dir);
  Policy policy;
  if (!p.policy_ckpt.empty()) {
    policy = policy_from_checkpoint(load_checkpoint(p.policy_ckpt));
  } else {
    std::cerr << "warm-starting on " << cfg.warm_demos << " demonstrations\n";
    policy = warm_started_policy(cfg, problem_sets(rows, cfg.train_difficulty));
    save_checkpoint(dir.path("warm_policy.ckpt"), policy_checkpoint(policy), false);
  }
  const std::string run_id = std::string(reward_mode_name(cfg.train.mode)) + "-s" + std::to_string(cfg.seed);
  TrainingInputs in = training_inputs(cfg, rows, std::move(policy), std::move(rm), run_id);
  in.assistant.endpoint = x.assistant_endpoint;
  auto csv = dir.open("metrics.csv");
  write_metrics_header(csv);
  const TrainingResult res = run_training(in, [&](const MetricsRecord& r) {
    write_metrics_row(csv, r);
    csv.flush();
    std::cerr << "step " << r.step << " reward " << r.mean_train_reward << " oracle " << r.oracle_train_accuracy
              << '\n';
  });
  save_checkpoint(dir.path("policy.ckpt"), policy_checkpoint(res.policy), false);
  if (res.rm) save_checkpoint(dir.path("rm_final.ckpt"), rm_checkpoint(*res.rm), false);
  nlohmann::ordered_json sum = summarize(res.metrics).at(0).to_json();
  sum["initial_test"] = res.initial_test.to_json();
  sum["final_test"] = res.final_test.to_json();
  sum["ref_refreshes"] = res.ref_refreshes;
  dir.write_json("summary.json", sum);
  write_manifest(dir, "train", cfg, inputs);
  std::cout << sum.dump() << '\n';
  return 0;
}

int cmd_eval(const Common& c, const Paths& p, const Extra& x) {
  const RunConfig cfg = resolve(c, x);
  if (p.policy_ckpt.empty()) throw ConfigError("eval requires --policy-checkpoint");
  const nlohmann::ordered_json inputs = {{"corpus", p.corpus}, {"policy_checkpoint", p.policy_ckpt}};
  echo("eval", cfg, c, inputs);
  const Policy policy = policy_from_checkpoint(load_checkpoint(p.policy_ckpt));
  const ProblemSets sets = problem_sets(load_corpus(p.corpus), cfg.train_difficulty);
  nlohmann::ordered_json rep;
  rep["train"] = evaluate_policy(policy, sets.train, cfg.train.eval_k, cfg.train.sampling, cfg.seed).to_json();
  rep["heldout"] = evaluate_policy(policy, sets.heldout, cfg.train.eval_k, cfg.train.sampling, cfg.seed).to_json();
  rep["test"] = evaluate_policy(policy, sets.test, cfg.train.eval_k, cfg.train.sampling, cfg.seed).to_json();
  RunDir dir(c.out_dir);
  dir.write_json("eval.json", rep);
  write_manifest(dir, "eval", cfg, inputs);
  std::cout << rep.dump() << '\n';
  return 0;
}

nlohmann::ordered_json confusion_json(const ConfusionReport& r) {
  nlohmann::ordered_json j;
  j["rows"] = r.total();
  j["true_positive"] = r.true_positive;
  j["false_positive"] = r.false_positive;
  j["false_negative"] = r.false_negative;
  j["true_negative"] = r.true_negative;
  j["unparseable"] = r.unparseable;
  j["precision"] = r.precision ? nlohmann::ordered_json(*r.precision) : nlohmann::ordered_json();
  j["recall"] = r.recall ? nlohmann::ordered_json(*r.recall) : nlohmann::ordered_json();
  return j;
}

// Only the fields the verifier needs; other corpus fields are ignored.
int cmd_verify(const Common& c, const Paths& p, const Extra& x) {
  const RunConfig cfg = resolve(c, x);
  echo("verify", cfg, c, {{"corpus", p.corpus}});
  auto in = open_in(p.corpus, "corpus");
  std::vector<VerifierItem> items;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      (void)j.at("problem_id").get<std::string>();
      items.push_back({j.at("reference").get<std::string>(), j.at("completion").get<std::string>(),
                       j.at("oracle_correct").get<bool>()});
    } catch (const std::exception& e) {
      throw FormatError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  const auto report = confusion_json(score_verifier(items));
  RunDir dir(c.out_dir);
  dir.write_json("confusion.json", report);
  write_manifest(dir, "verify", cfg, {{"corpus", p.corpus}});
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_report(const Common& c, const Paths& p, const Extra& x) {
  const RunConfig cfg = resolve(c, x);
  if (p.metrics_files.empty()) throw ConfigError("report requires at least one --metrics file");
  echo("report", cfg, c, {{"metrics", p.metrics_files}});
  std::vector<MetricsRecord> all;
  for (const auto& f : p.metrics_files) {
    auto in = open_in(f, "metrics");
    auto recs = read_metrics_csv(in);
    all.insert(all.end(), recs.begin(), recs.end());
  }
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const auto& s : summarize(all)) runs.push_back(s.to_json());
  RunDir dir(c.out_dir);
  dir.write_json("report.json", runs);
  auto dat = dir.open("curves.dat");
  write_gnuplot_data(dat, all);
  write_manifest(dir, "report", cfg, {{"metrics", p.metrics_files}});
  std::cout << runs.dump() << '\n';
  return 0;
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const EndpointError*>(&e)) return "endpoint";
  return "runtime";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy and reward-model co-training on a synthetic arithmetic task"};
  app.require_subcommand(1);
  Common common;
  Paths paths;
  Extra extra;

  auto* gen = app.add_subcommand("gen-data", "generate the labeled completion corpus");
  add_common(gen, common);

  auto* ann = app.add_subcommand("annotate", "rule verifier + judge agreement filtering");
  add_common(ann, common);
  ann->add_option("--corpus", paths.corpus, "corpus JSONL")->required();
  ann->add_option("--judge-endpoint", extra.judge_endpoint, "external judge URL");

  auto* trm = app.add_subcommand("train-rm", "BCE-pretrain the reward model");
  add_common(trm, common);
  trm->add_option("--annotated", paths.annotated, "annotated JSONL")->required();
  trm->add_option("--epochs", extra.epochs);
  trm->add_option("--lr", extra.lr);
  trm->add_option("--batch", extra.batch);

  auto* tr = app.add_subcommand("train", "GRPO training with the selected reward mode");
  add_common(tr, common);
  tr->add_option("--corpus", paths.corpus, "corpus JSONL")->required();
  tr->add_option("--mode", extra.mode, "rule | static-rm | cooper | cooper-discrete");
  tr->add_option("--rm-checkpoint", paths.rm_ckpt);
  tr->add_option("--policy-checkpoint", paths.policy_ckpt, "skip the warm start");
  tr->add_option("--assistant-endpoint", extra.assistant_endpoint, "external negative generator URL");

  auto* ev = app.add_subcommand("eval", "oracle-judged mean-of-k accuracy");
  add_common(ev, common);
  ev->add_option("--corpus", paths.corpus, "corpus JSONL")->required();
  ev->add_option("--policy-checkpoint", paths.policy_ckpt)->required();
  ev->add_option("-k", extra.k, "samples per problem");

  auto* ver = app.add_subcommand("verify", "rule verifier confusion report against the oracle");
  add_common(ver, common);
  ver->add_option("--corpus", paths.corpus, "corpus JSONL")->required();

  auto* rep = app.add_subcommand("report", "per-run summaries and gnuplot curves");
  add_common(rep, common);
  rep->add_option("--metrics", paths.metrics_files, "metrics CSV (repeatable)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(common, extra);
    if (*ann) return cmd_annotate(common, paths, extra);
    if (*trm) return cmd_train_rm(common, paths, extra);
    if (*tr) return cmd_train(common, paths, extra);
    if (*ev) return cmd_eval(common, paths, extra);
    if (*ver) return cmd_verify(common, paths, extra);
    if (*rep) return cmd_report(common, paths, extra);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 1;
}
