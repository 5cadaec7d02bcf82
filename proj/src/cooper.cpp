#include "cooper/cooper.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <numeric>
#include <stdexcept>

#include "cooper/errors.hpp"
#include "cooper/http_json.hpp"
#include "cooper/vocab.hpp"

namespace cooper {

namespace {

constexpr std::uint64_t kTagRollout = fnv1a("rollout");
constexpr std::uint64_t kTagPositive = fnv1a("positive");
constexpr std::uint64_t kTagNegative = fnv1a("negative");
constexpr std::uint64_t kTagSubset = fnv1a("subset");
constexpr std::uint64_t kTagEval = fnv1a("test-eval");
constexpr std::uint64_t kTagDemo = fnv1a("demonstrations");

std::optional<std::int64_t> checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) return std::nullopt;
  return r;
}

std::optional<std::int64_t> checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) return std::nullopt;
  return r;
}

std::string swap_digits(std::string s) {
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const bool digits = std::isdigit(static_cast<unsigned char>(s[i])) && std::isdigit(static_cast<unsigned char>(s[i + 1]));
    if (digits && s[i] != s[i + 1]) {
      std::swap(s[i], s[i + 1]);
      break;
    }
  }
  return s;
}

std::int64_t offset_of(Corruption c) {
  switch (c) {
    case Corruption::PlusOne: return 1;
    case Corruption::MinusOne: return -1;
    case Corruption::PlusTwo: return 2;
    case Corruption::MinusTwo: return -2;
    default: return 0;
  }
}

std::optional<std::string> corrupt_integer(std::int64_t n, Corruption c) {
  if (c == Corruption::DigitSwap) return swap_digits(std::to_string(n));
  const auto v = c == Corruption::TimesTen ? checked_mul(n, 10) : checked_add(n, offset_of(c));
  if (!v) return std::nullopt;
  return std::to_string(*v);
}

std::optional<std::string> corrupt_rational(std::int64_t p, std::int64_t q, Corruption c) {
  if (c == Corruption::DigitSwap) return swap_digits(std::to_string(p)) + "/" + std::to_string(q);
  std::optional<std::int64_t> np;
  if (c == Corruption::TimesTen) {
    np = checked_mul(p, 10);
  } else if (const auto dq = checked_mul(offset_of(c), q)) {
    np = checked_add(p, *dq);
  }
  if (!np) return std::nullopt;
  return render(CanonicalAnswer::rational(*np, q));
}

std::optional<std::string> corrupt_decimal(std::int64_t m, std::int32_t e, Corruption c) {
  if (c == Corruption::DigitSwap) return swap_digits(render(CanonicalAnswer::decimal(m, e)));
  if (c == Corruption::TimesTen) return render(CanonicalAnswer::decimal(m, e + 1));
  std::int64_t unit = 1;
  for (std::int32_t k = 0; k < -e; ++k) {
    const auto u = checked_mul(unit, 10);
    if (!u) return std::nullopt;
    unit = *u;
  }
  const auto d = checked_mul(offset_of(c), unit);
  if (!d) return std::nullopt;
  const auto nm = checked_add(m, *d);
  if (!nm) return std::nullopt;
  return render(CanonicalAnswer::decimal(*nm, std::min<std::int32_t>(e, 0)));
}

double fraction(std::size_t num, std::size_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

}  // namespace

std::vector<Demonstration> make_demonstrations(const WorldConfig& world, const std::vector<std::string>& excluded,
                                               std::size_t count, std::uint64_t seed,
                                               std::optional<Difficulty> difficulty) {
  if (world.styles.empty()) throw ConfigError("no generator styles");
  const std::unordered_set<std::string> banned(excluded.begin(), excluded.end());
  const int eos = Vocab::instance().eos();
  SeedStream rng(derive_seed(seed, kTagDemo));
  std::vector<Demonstration> out;
  out.reserve(count);
  while (out.size() < count) {
    const Difficulty diff = difficulty ? *difficulty
                                    : (rng.uniform() < world.hard_fraction ? Difficulty::Hard : Difficulty::Easy);
    const Problem p = generate_problem(rng, diff, world);
    if (banned.count(p.statement)) continue;
    GeneratorStyle style = world.styles[rng.index(world.styles.size())];
    style.error_rate = 0.0;
    Demonstration d{encode_prompt(p.statement), render_tokens(p, style, rng).ids};
    d.response.push_back(eos);
    out.push_back(std::move(d));
  }
  return out;
}

std::optional<std::size_t> select_positive(const std::vector<Verdict>& verdicts, SeedStream& rng) {
  std::vector<std::size_t> ok;
  for (std::size_t i = 0; i < verdicts.size(); ++i)
    if (verdicts[i].correct()) ok.push_back(i);
  if (ok.empty()) return std::nullopt;
  return ok[rng.index(ok.size())];
}

std::string corrupt_answer(const CanonicalAnswer& reference, Corruption c) {
  std::optional<std::string> out;
  switch (reference.kind) {
    case AnswerKind::Integer: out = corrupt_integer(reference.num, c); break;
    case AnswerKind::Rational: out = corrupt_rational(reference.num, reference.den, c); break;
    case AnswerKind::Decimal: out = corrupt_decimal(reference.num, reference.exponent, c); break;
    case AnswerKind::Opaque: out = reference.text + " " + std::to_string(static_cast<int>(c)); break;
  }
  // An overflowing corruption degrades to the reference itself and is then
  // rejected by re-verification.
  return out ? *out : render(reference);
}

NegativeResult generate_negative(const std::string& o_pos, const std::string& reference_text, int max_retries,
                                 SeedStream& rng, const AssistantConfig& assistant, const std::string& statement) {
  NegativeResult res;
  const Verdict pos = rule_verdict(reference_text, o_pos);
  if (!pos.correct() || !pos.raw) return res;
  const CanonicalAnswer ref = canonicalize(reference_text);
  auto order = kCorruptionLedger;
  rng.shuffle(order.begin(), order.end());
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    ++res.attempts;
    std::string candidate;
    if (!assistant.endpoint.empty()) {
      try {
        const auto reply = post_json(
            assistant.endpoint,
            {{"statement", statement}, {"reference", reference_text}, {"positive_completion", o_pos}},
            assistant.timeout_seconds);
        if (!reply.contains("negative_completion") || !reply["negative_completion"].is_string()) continue;
        candidate = reply["negative_completion"].get<std::string>();
      } catch (const EndpointError&) {
        continue;
      }
    } else {
      const Corruption c = order[static_cast<std::size_t>(attempt) % order.size()];
      candidate = o_pos.substr(0, pos.raw->begin) + corrupt_answer(ref, c) + o_pos.substr(pos.raw->end);
    }
    if (!rule_verdict(reference_text, candidate).correct()) {
      res.text = std::move(candidate);
      return res;
    }
  }
  return res;
}

StepReport cooper_step(CooperState& state, const std::vector<const Problem*>& batch, const TrainConfig& cfg,
                       std::uint64_t seed, const AssistantConfig& assistant) {
  if (batch.empty()) throw std::invalid_argument("cooper_step: empty batch");
  const Vocab& vocab = Vocab::instance();
  const auto step = static_cast<std::uint64_t>(state.step);
  const std::size_t G = static_cast<std::size_t>(cfg.group_size);
  StepReport rep;
  rep.groups.resize(batch.size());

  std::vector<const std::vector<int>*> prompts;
  std::vector<SeedStream> rngs;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    rep.groups[b].problem = b;
    rep.groups[b].prompt = encode_prompt(batch[b]->statement);
  }
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t i = 0; i < G; ++i) {
      prompts.push_back(&rep.groups[b].prompt);
      rngs.emplace_back(derive_seed(seed, kTagRollout, step, b, i));
    }
  }
  auto rollouts = sample_responses(state.policy, prompts, cfg.sampling, rngs);

  std::vector<SequenceRef> seqs;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto& grp = rep.groups[b];
    grp.rollouts.assign(std::make_move_iterator(rollouts.begin() + static_cast<std::ptrdiff_t>(b * G)),
                        std::make_move_iterator(rollouts.begin() + static_cast<std::ptrdiff_t>((b + 1) * G)));
    for (const auto& ro : grp.rollouts) seqs.push_back({&grp.prompt, &ro.tokens});
  }
  const auto ref_lp = token_logprobs_value(state.reference, seqs, cfg.sampling.temperature);

  std::size_t n_oracle = 0, n_rule = 0, n_phrase = 0, offset = 0;
  double reward_sum = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Problem& p = *batch[b];
    auto& grp = rep.groups[b];
    std::vector<std::string> texts;
    for (const auto& ro : grp.rollouts) {
      texts.push_back(ro.text);
      grp.verdicts.push_back(rule_verdict(p.reference_text, ro.text));
      if (oracle_correct(p.reference, ro.text)) ++n_oracle;
      if (grp.verdicts.back().correct()) ++n_rule;
      if (std::find(ro.tokens.begin(), ro.tokens.end(), vocab.phrase()) != ro.tokens.end()) ++n_phrase;
      grp.ref_logprobs.emplace_back(ref_lp.begin() + static_cast<std::ptrdiff_t>(offset),
                                    ref_lp.begin() + static_cast<std::ptrdiff_t>(offset + ro.tokens.size()));
      offset += ro.tokens.size();
    }
    grp.rewards = assign_rewards(cfg.mode, state.rm ? &*state.rm : nullptr, p.statement, p.reference_text, texts,
                                 grp.verdicts);
    for (double r : grp.rewards) reward_sum += r;
    grp.advantages = compute_advantages(grp.rewards);

    ContrastivePair pair{p.id, p.statement, p.reference_text, {}, {}, false, 0};
    SeedStream pos_rng(derive_seed(seed, kTagPositive, step, b));
    if (const auto k = select_positive(grp.verdicts, pos_rng)) {
      pair.o_pos = texts[*k];
      SeedStream neg_rng(derive_seed(seed, kTagNegative, step, b));
      auto neg = generate_negative(pair.o_pos, p.reference_text, cfg.max_neg_retries, neg_rng, assistant,
                                   p.statement);
      pair.neg_attempts = neg.attempts;
      if (neg.text) {
        pair.o_neg = std::move(*neg.text);
        pair.valid = true;
        ++rep.valid_pairs;
        if (!oracle_correct(p.reference, pair.o_pos) || oracle_correct(p.reference, pair.o_neg))
          ++rep.pair_oracle_violations;
      }
    }
    rep.pairs.push_back(std::move(pair));
  }
  const double draws = static_cast<double>(batch.size() * G);
  rep.mean_reward = reward_sum / draws;
  rep.oracle_accuracy = static_cast<double>(n_oracle) / draws;
  rep.rule_accuracy = static_cast<double>(n_rule) / draws;
  rep.phrase_rate = static_cast<double>(n_phrase) / draws;
  rep.mask_rate = fraction(batch.size() - static_cast<std::size_t>(rep.valid_pairs), batch.size());

  OptimizerConfig opt;
  opt.lr = cfg.lr;
  opt.max_grad_norm = cfg.grad_clip;
  rep.grpo = grpo_update(state.policy, rep.groups, cfg.clip_eps, cfg.kl_beta, cfg.sampling.temperature, opt);

  if (updates_reward_model(cfg.mode) && state.rm) {
    OptimizerConfig rm_opt;
    rm_opt.kind = cfg.rm_optimizer;
    rm_opt.lr = cfg.rm_lr;
    rep.rm_loss = contrastive_update(*state.rm, rep.pairs, rm_opt);
  }
  ++state.step;
  return rep;
}

TrainingResult run_training(const TrainingInputs& in, const MetricsSink& sink) {
  const TrainConfig& cfg = in.cfg;
  cfg.validate();
  if (uses_reward_model(cfg.mode) && !in.rm)
    throw ConfigError("mode " + std::string(reward_mode_name(cfg.mode)) + " needs a reward model");
  if (in.train.empty()) throw ConfigError("no training problems");
  if (in.test.empty()) throw ConfigError("no test problems");

  const auto t0 = std::chrono::steady_clock::now();
  CooperState st{in.policy, in.policy, uses_reward_model(cfg.mode) ? in.rm : std::nullopt, 0, 0, 0};
  const std::vector<Problem> test(in.test.begin(),
                                  in.test.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(
                                                        in.test.size(), static_cast<std::size_t>(cfg.eval_problems))));
  const std::uint64_t eval_seed = derive_seed(in.seed, kTagEval);
  std::vector<FeatureVector> probe;
  for (const auto& e : in.rm_heldout) probe.push_back(featurize(e.statement, e.reference_text, e.completion));

  TrainingResult res;
  res.initial_test = evaluate_policy(st.policy, test, cfg.eval_k, cfg.sampling, eval_seed);

  const std::size_t per_iter = std::min(in.train.size(), static_cast<std::size_t>(cfg.problems_per_iteration));
  const std::size_t bsz = static_cast<std::size_t>(cfg.batch_problems);
  const int steps_per_iter = static_cast<int>((per_iter + bsz - 1) / bsz);
  const int total_steps = steps_per_iter * cfg.iterations;

  std::vector<std::size_t> order(in.train.size());
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    st.outer_iteration = iter + 1;
    st.reference.params = st.policy.params.snapshot();
    ++st.ref_refreshes;
    std::iota(order.begin(), order.end(), 0);
    SeedStream subset(derive_seed(in.seed, kTagSubset, static_cast<std::uint64_t>(iter)));
    subset.shuffle(order.begin(), order.end());
    for (std::size_t b = 0; b < per_iter; b += bsz) {
      std::vector<const Problem*> batch;
      for (std::size_t k = b; k < std::min(per_iter, b + bsz); ++k) batch.push_back(&in.train[order[k]]);
      const StepReport rep = cooper_step(st, batch, cfg, in.seed, in.assistant);

      MetricsRecord r;
      r.run_id = in.run_id;
      r.mode = std::string(reward_mode_name(cfg.mode));
      r.outer_iteration = st.outer_iteration;
      r.step = st.step;
      r.mean_train_reward = rep.mean_reward;
      r.oracle_train_accuracy = rep.oracle_accuracy;
      r.rule_train_accuracy = rep.rule_accuracy;
      r.mean_kl = rep.grpo.mean_kl;
      r.pair_mask_rate = rep.mask_rate;
      r.valid_pairs = rep.valid_pairs;
      r.pair_oracle_violations = rep.pair_oracle_violations;
      r.spurious_phrase_rate = rep.phrase_rate;
      const bool last = st.step == total_steps;
      if (last || (cfg.eval_every > 0 && st.step % cfg.eval_every == 0)) {
        const EvalReport e = evaluate_policy(st.policy, test, cfg.eval_k, cfg.sampling, eval_seed);
        r.oracle_test_accuracy = e.accuracy();
        r.rule_test_accuracy = e.rule_accuracy();
        if (last) res.final_test = e;
      }
      if (st.rm && (last || (cfg.rm_eval_every > 0 && st.step % cfg.rm_eval_every == 0))) {
        if (!in.rm_heldout.empty()) r.rm_heldout_accuracy = rm_eval(*st.rm, in.rm_heldout);
        if (!probe.empty()) r.rm_phrase_effect = phrase_effect(*st.rm, probe);
      }
      if (cfg.record_wall_time)
        r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (sink) sink(r);
      res.metrics.push_back(std::move(r));
    }
  }
  res.policy = std::move(st.policy);
  res.rm = std::move(st.rm);
  res.ref_refreshes = st.ref_refreshes;
  return res;
}

}  // namespace cooper
