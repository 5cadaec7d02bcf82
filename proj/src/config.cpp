#include "cooper/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>

#include "cooper/errors.hpp"

namespace cooper {

namespace {

std::string_view trim_view(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError(std::string(key) + ": cannot parse '" + std::string(value) + "' as " + std::string(want));
}

template <typename T>
T parse_number(std::string_view key, std::string_view v, std::string_view want) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, want);
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "a boolean");
}

struct Field {
  std::function<nlohmann::json(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
};

template <typename T, typename Get>
Field number_field(Get get) {
  return {[get](const RunConfig& c) { return nlohmann::json(*get(const_cast<RunConfig&>(c))); },
          [get](RunConfig& c, std::string_view k, std::string_view v) {
            *get(c) = parse_number<T>(k, v, std::is_integral_v<T> ? "an integer" : "a number");
          }};
}

#define COOPER_INT(path) number_field<int>([](RunConfig& c) { return &c.path; })
#define COOPER_SIZE(path) number_field<std::size_t>([](RunConfig& c) { return &c.path; })
#define COOPER_I64(path) number_field<std::int64_t>([](RunConfig& c) { return &c.path; })
#define COOPER_DBL(path) number_field<double>([](RunConfig& c) { return &c.path; })
#define COOPER_BOOL(path)                                                                      \
  Field{[](const RunConfig& c) { return nlohmann::json(c.path); },                               \
        [](RunConfig& c, std::string_view k, std::string_view v) { c.path = parse_bool(k, v); }}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = {
      {"seed", number_field<std::uint64_t>([](RunConfig& c) { return &c.seed; })},
      {"world.problems", COOPER_SIZE(world.problems)},
      {"world.hard_fraction", COOPER_DBL(world.hard_fraction)},
      {"world.easy_max", COOPER_I64(world.easy_max)},
      {"world.hard_max", COOPER_I64(world.hard_max)},
      {"world.max_denominator", COOPER_I64(world.max_denominator)},
      {"world.train_ratio", COOPER_DBL(world.train_ratio)},
      {"world.heldout_ratio", COOPER_DBL(world.heldout_ratio)},
      {"world.test_ratio", COOPER_DBL(world.test_ratio)},
      {"judge.kind",
       {[](const RunConfig& c) {
          return nlohmann::json(c.judge.kind == JudgeKind::External ? "external" : "noisy_oracle");
        },
        [](RunConfig& c, std::string_view k, std::string_view v) {
          if (v == "noisy_oracle") {
            c.judge.kind = JudgeKind::NoisyOracle;
          } else if (v == "external") {
            c.judge.kind = JudgeKind::External;
          } else {
            bad_value(k, v, "noisy_oracle or external");
          }
        }}},
      {"judge.fp_rate", COOPER_DBL(judge.fp_rate)},
      {"judge.fn_rate", COOPER_DBL(judge.fn_rate)},
      {"judge.endpoint",
       {[](const RunConfig& c) { return nlohmann::json(c.judge.endpoint); },
        [](RunConfig& c, std::string_view, std::string_view v) { c.judge.endpoint = std::string(v); }}},
      {"judge.timeout", COOPER_INT(judge.timeout_seconds)},
      {"rm.hidden", COOPER_INT(rm.hidden)},
      {"rm.epochs", COOPER_INT(rm.epochs)},
      {"rm.batch", COOPER_INT(rm.batch)},
      {"rm.lr", COOPER_DBL(rm.lr)},
      {"rm.weight_decay", COOPER_DBL(rm.weight_decay)},
      {"rm.constant_feature_scale", COOPER_DBL(rm.constant_feature_scale)},
      {"policy.embed", COOPER_INT(policy.embed)},
      {"policy.hidden", COOPER_INT(policy.hidden)},
      {"policy.context", COOPER_INT(policy.context)},
      {"policy.word_slots", COOPER_INT(policy.word_slots)},
      {"policy.word_width", COOPER_INT(policy.word_width)},
      {"policy.max_len", COOPER_INT(policy.max_len)},
      {"warm.demos", COOPER_SIZE(warm_demos)},
      {"warm.epochs", COOPER_INT(warm.epochs)},
      {"warm.batch", COOPER_INT(warm.batch)},
      {"warm.lr", COOPER_DBL(warm.lr)},
      {"train.mode",
       {[](const RunConfig& c) { return nlohmann::json(std::string(reward_mode_name(c.train.mode))); },
        [](RunConfig& c, std::string_view, std::string_view v) { c.train.mode = parse_reward_mode(v); }}},
      {"train.difficulty",
       {[](const RunConfig& c) {
          return nlohmann::json(c.train_difficulty ? std::string(difficulty_name(*c.train_difficulty)) : "all");
        },
        [](RunConfig& c, std::string_view k, std::string_view v) {
          if (v == "all") {
            c.train_difficulty.reset();
            return;
          }
          try {
            c.train_difficulty = parse_difficulty(v);
          } catch (const FormatError&) {
            bad_value(k, v, "easy, hard or all");
          }
        }}},
      {"train.group_size", COOPER_INT(train.group_size)},
      {"train.clip_eps", COOPER_DBL(train.clip_eps)},
      {"train.kl_beta", COOPER_DBL(train.kl_beta)},
      {"train.batch_problems", COOPER_INT(train.batch_problems)},
      {"train.lr", COOPER_DBL(train.lr)},
      {"train.rm_optimizer",
       {[](const RunConfig& c) { return nlohmann::json(c.train.rm_optimizer == OptimizerKind::Sgd ? "sgd" : "adam"); },
        [](RunConfig& c, std::string_view k, std::string_view v) {
          if (v == "sgd") {
            c.train.rm_optimizer = OptimizerKind::Sgd;
          } else if (v == "adam") {
            c.train.rm_optimizer = OptimizerKind::Adam;
          } else {
            bad_value(k, v, "sgd or adam");
          }
        }}},
      {"train.rm_lr", COOPER_DBL(train.rm_lr)},
      {"train.grad_clip", COOPER_DBL(train.grad_clip)},
      {"train.iterations", COOPER_INT(train.iterations)},
      {"train.problems_per_iteration", COOPER_INT(train.problems_per_iteration)},
      {"train.temperature", COOPER_DBL(train.sampling.temperature)},
      {"train.top_p", COOPER_DBL(train.sampling.top_p)},
      {"train.max_len", COOPER_INT(train.sampling.max_len)},
      {"train.max_neg_retries", COOPER_INT(train.max_neg_retries)},
      {"train.eval_every", COOPER_INT(train.eval_every)},
      {"train.eval_k", COOPER_INT(train.eval_k)},
      {"train.eval_problems", COOPER_INT(train.eval_problems)},
      {"train.rm_eval_every", COOPER_INT(train.rm_eval_every)},
      {"train.record_wall_time", COOPER_BOOL(train.record_wall_time)},
  };
  return table;
}

#undef COOPER_INT
#undef COOPER_SIZE
#undef COOPER_I64
#undef COOPER_DBL
#undef COOPER_BOOL

// style.<id>.<attr>; returns {id, attr} or nullopt for non-style keys.
std::optional<std::pair<std::string, std::string>> split_style_key(std::string_view key) {
  constexpr std::string_view kPrefix = "style.";
  if (key.substr(0, kPrefix.size()) != kPrefix) return std::nullopt;
  key.remove_prefix(kPrefix.size());
  const auto dot = key.rfind('.');
  if (dot == std::string_view::npos || dot == 0) throw ConfigError("style key must be style.<id>.<attribute>");
  return std::pair{std::string(key.substr(0, dot)), std::string(key.substr(dot + 1))};
}

GeneratorStyle& style_slot(RunConfig& c, const std::string& id) {
  for (auto& s : c.world.styles)
    if (s.id == id) return s;
  GeneratorStyle s;
  s.id = id;
  c.world.styles.push_back(s);
  return c.world.styles.back();
}

}  // namespace

Marker parse_marker(std::string_view s) {
  if (s == "boxed") return Marker::Boxed;
  if (s == "hashmark") return Marker::HashMark;
  if (s == "answer_is") return Marker::AnswerIs;
  throw ConfigError("unknown marker '" + std::string(s) + "' (boxed, hashmark, answer_is, none)");
}

RunConfig::RunConfig() {
  train.eval_every = 10;
  train.rm_eval_every = 10;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  key = trim_view(key);
  value = trim_view(value);
  if (auto sk = split_style_key(key)) {
    GeneratorStyle& s = style_slot(*this, sk->first);
    const std::string& attr = sk->second;
    if (attr == "marker") {
      s.marker = value == "none" ? std::nullopt : std::optional<Marker>(parse_marker(value));
    } else if (attr == "error_rate") {
      s.error_rate = parse_number<double>(key, value, "a number");
    } else if (attr == "phrase") {
      s.spurious_phrase = parse_bool(key, value);
    } else if (attr == "verbosity") {
      s.verbosity = parse_number<int>(key, value, "an integer");
    } else {
      throw ConfigError("unknown config key '" + std::string(key) + "'");
    }
    return;
  }
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second.set(*this, key, value);
}

void RunConfig::validate() const {
  world.validate();
  train.validate();
  if (!(judge.fp_rate >= 0.0 && judge.fp_rate <= 1.0)) throw ConfigError("judge.fp_rate must lie in [0, 1]");
  if (!(judge.fn_rate >= 0.0 && judge.fn_rate <= 1.0)) throw ConfigError("judge.fn_rate must lie in [0, 1]");
  if (judge.kind == JudgeKind::External && judge.endpoint.empty())
    throw ConfigError("judge.kind = external needs judge.endpoint");
  if (judge.timeout_seconds < 1) throw ConfigError("judge.timeout must be >= 1");
  if (rm.hidden < 1 || rm.epochs < 1 || rm.batch < 1) throw ConfigError("rm.hidden, rm.epochs, rm.batch must be >= 1");
  if (!(rm.lr > 0.0)) throw ConfigError("rm.lr must be > 0");
  if (!(rm.weight_decay >= 0.0)) throw ConfigError("rm.weight_decay must be >= 0");
  if (!(rm.constant_feature_scale > 0.0)) throw ConfigError("rm.constant_feature_scale must be > 0");
  if (policy.embed < 1 || policy.hidden < 1 || policy.context < 1 || policy.word_slots < 1 ||
      policy.word_width < 1 || policy.max_len < 1)
    throw ConfigError("policy sizes must be >= 1");
  if (train.sampling.max_len > policy.max_len)
    throw ConfigError("train.max_len must not exceed policy.max_len");
  if (warm.epochs < 0 || warm.batch < 1) throw ConfigError("warm.epochs must be >= 0 and warm.batch >= 1");
  if (!(warm.lr > 0.0)) throw ConfigError("warm.lr must be > 0");
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  for (const auto& [key, f] : fields()) j[key] = f.get(*this);
  for (const auto& s : world.styles) {
    const std::string p = "style." + s.id + ".";
    j[p + "marker"] = s.marker ? std::string(marker_name(*s.marker)) : "none";
    j[p + "error_rate"] = s.error_rate;
    j[p + "phrase"] = s.spurious_phrase;
    j[p + "verbosity"] = s.verbosity;
  }
  return j;
}

RunConfig parse_run_config(std::istream& is, RunConfig base) {
  std::set<std::string, std::less<>> seen;
  bool styles_reset = false;
  std::string line;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim_view(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string_view key = trim_view(s.substr(0, eq));
    if (!seen.insert(std::string(key)).second) throw ConfigError(where + "repeated key '" + std::string(key) + "'");
    try {
      if (!styles_reset && split_style_key(key)) {
        base.world.styles.clear();
        styles_reset = true;
      }
      base.set(key, s.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_run_config(in, std::move(base));
}

}  // namespace cooper
