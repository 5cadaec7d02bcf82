#include "cooper/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cooper/vocab.hpp"

namespace cooper {

namespace {

constexpr std::uint64_t kTagInit = fnv1a("policy-init");
constexpr std::uint64_t kTagEpoch = fnv1a("warm-start-epoch");

std::vector<int> layout_prompt(const PolicyConfig& cfg, const std::vector<int>& prompt) {
  if (prompt.empty()) throw std::invalid_argument("policy: empty prompt");
  const Vocab& v = Vocab::instance();
  std::vector<std::vector<int>> words(1);
  for (int id : prompt) {
    if (id < 0 || id >= v.size()) throw std::out_of_range("policy: prompt token id " + std::to_string(id));
    if (id == v.sp()) {
      if (!words.back().empty()) words.emplace_back();
      continue;
    }
    words.back().push_back(id);
  }
  const auto width = static_cast<std::size_t>(cfg.word_width);
  std::vector<int> out(static_cast<std::size_t>(cfg.word_slots) * width, v.pad());
  for (std::size_t w = 0; w < words.size() && w < static_cast<std::size_t>(cfg.word_slots); ++w) {
    const auto& word = words[w];
    const std::size_t n = std::min(word.size(), width);
    for (std::size_t k = 0; k < n; ++k) out[w * width + width - n + k] = word[word.size() - n + k];
  }
  return out;
}

// Appends the response-side input for predicting response[t]: the last
// `context` tokens of the <bos>-prefixed sequence and a position id.
void append_context(const PolicyConfig& cfg, const std::vector<int>& response, std::size_t t, std::vector<int>& ids) {
  const Vocab& v = Vocab::instance();
  const auto k = static_cast<std::ptrdiff_t>(cfg.context);
  for (std::ptrdiff_t j = 0; j < k; ++j) {
    const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t) - k + 1 + j;
    if (idx < 0) {
      ids.push_back(v.pad());
    } else if (idx == 0) {
      ids.push_back(v.bos());
    } else {
      const int tok = response[static_cast<std::size_t>(idx - 1)];
      if (tok < 0 || tok >= v.size()) throw std::out_of_range("policy: response token id " + std::to_string(tok));
      ids.push_back(tok);
    }
  }
  ids.push_back(v.size() + std::min(static_cast<int>(t), cfg.max_len - 1));
}

// The first layer splits into a prompt part, computed once per sequence, and
// a per-token context part; their sum feeds the tanh.
Var prompt_hidden(Graph& g, const Policy& p, const std::vector<int>& layouts) {
  const auto slots = static_cast<std::size_t>(p.cfg.word_slots * p.cfg.word_width);
  return ops::matmul(ops::embedding(g.parameter(p.params, "embed"), layouts, slots), g.parameter(p.params, "w1p"));
}

// N x V temperature-scaled log-probabilities.
Var head(Graph& g, const Policy& p, Var prompt_rows, const std::vector<int>& ctx_ids, double temperature) {
  const auto slots = static_cast<std::size_t>(p.cfg.context + 1);
  Var xc = ops::embedding(g.parameter(p.params, "embed"), ctx_ids, slots);
  Var hc = ops::affine(xc, g.parameter(p.params, "w1c"), g.parameter(p.params, "b1"));
  Var h = ops::tanh(ops::add(prompt_rows, hc));
  Var logits = ops::affine(h, g.parameter(p.params, "w2"), g.parameter(p.params, "b2"));
  if (temperature != 1.0) logits = ops::scale(logits, 1.0 / temperature);
  return ops::log_softmax(logits);
}

int nucleus_draw(std::span<const double> logp, double top_p, SeedStream& rng) {
  std::vector<int> order(logp.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return logp[a] > logp[b]; });
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    mass += std::exp(logp[order[keep]]);
    ++keep;
    if (mass >= top_p) break;
  }
  double u = rng.uniform() * mass;
  for (std::size_t i = 0; i < keep; ++i) {
    u -= std::exp(logp[order[i]]);
    if (u < 0.0) return order[i];
  }
  return order[keep - 1];
}

}  // namespace

nlohmann::json PolicyConfig::to_json() const {
  return {{"embed", embed},         {"hidden", hidden},         {"context", context},
          {"word_slots", word_slots}, {"word_width", word_width}, {"max_len", max_len}};
}

PolicyConfig PolicyConfig::from_json(const nlohmann::json& j) {
  PolicyConfig c;
  c.embed = j.at("embed").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.context = j.at("context").get<int>();
  c.word_slots = j.at("word_slots").get<int>();
  c.word_width = j.at("word_width").get<int>();
  c.max_len = j.at("max_len").get<int>();
  return c;
}

Policy init_policy(const PolicyConfig& cfg, std::uint64_t seed) {
  if (cfg.embed < 1 || cfg.hidden < 1 || cfg.context < 1 || cfg.word_slots < 1 || cfg.word_width < 1 ||
      cfg.max_len < 1)
    throw std::invalid_argument("policy: all sizes must be positive");
  const auto v = static_cast<std::size_t>(Vocab::instance().size());
  const auto e = static_cast<std::size_t>(cfg.embed), h = static_cast<std::size_t>(cfg.hidden);
  const std::size_t in_p = static_cast<std::size_t>(cfg.word_slots * cfg.word_width) * e;
  const std::size_t in_c = static_cast<std::size_t>(cfg.context + 1) * e;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_p + in_c));
  SeedStream rng(derive_seed(seed, kTagInit));
  Policy p{cfg, {}};
  p.params.add("embed", uniform_tensor({v + static_cast<std::size_t>(cfg.max_len), e}, 0.5, rng));
  p.params.add("w1p", uniform_tensor({in_p, h}, s1, rng));
  p.params.add("w1c", uniform_tensor({in_c, h}, s1, rng));
  p.params.add("b1", Tensor(Shape{1, h}));
  p.params.add("w2", uniform_tensor({h, v}, 0.1 / std::sqrt(static_cast<double>(h)), rng));
  p.params.add("b2", Tensor(Shape{1, v}));
  return p;
}

std::vector<int> encode_prompt(std::string_view statement) { return Vocab::instance().encode(statement, true); }

Rollout sample_response(const Policy& policy, const std::vector<int>& prompt, const SamplingConfig& sc,
                        SeedStream& rng) {
  std::vector<SeedStream> rngs{rng};
  auto out = sample_responses(policy, {&prompt}, sc, rngs);
  rng = rngs[0];
  return std::move(out[0]);
}

std::vector<Rollout> sample_responses(const Policy& policy, const std::vector<const std::vector<int>*>& prompts,
                                      const SamplingConfig& sc, std::vector<SeedStream>& rngs) {
  if (!(sc.temperature > 0.0)) throw std::invalid_argument("sampling: temperature must be positive");
  if (!(sc.top_p > 0.0 && sc.top_p <= 1.0)) throw std::invalid_argument("sampling: top_p must lie in (0, 1]");
  if (rngs.size() != prompts.size()) throw std::invalid_argument("sampling: one seed stream per prompt required");
  const Vocab& v = Vocab::instance();
  const std::size_t n = prompts.size();
  std::vector<int> layouts;
  for (const auto* p : prompts) {
    const auto l = layout_prompt(policy.cfg, *p);
    layouts.insert(layouts.end(), l.begin(), l.end());
  }
  Tensor hp;
  {
    Graph g;
    hp = prompt_hidden(g, policy, layouts).value();
  }
  const std::size_t hw = hp.cols();
  std::vector<Rollout> out(n);
  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), 0);
  const int max_len = std::max(1, sc.max_len);
  for (int t = 0; t < max_len && !active.empty(); ++t) {
    std::vector<int> ids;
    Tensor rows(Shape{active.size(), hw});
    for (std::size_t r = 0; r < active.size(); ++r) {
      append_context(policy.cfg, out[active[r]].tokens, static_cast<std::size_t>(t), ids);
      const auto src = hp.row(active[r]);
      std::copy(src.begin(), src.end(), rows.row(r).begin());
    }
    Graph g;
    const Tensor& lp = head(g, policy, g.constant(std::move(rows)), ids, sc.temperature).value();
    std::vector<std::size_t> still;
    for (std::size_t r = 0; r < active.size(); ++r) {
      Rollout& ro = out[active[r]];
      const int tok = nucleus_draw(lp.row(r), sc.top_p, rngs[active[r]]);
      ro.tokens.push_back(tok);
      ro.logprobs.push_back(lp.at(r, static_cast<std::size_t>(tok)));
      if (tok == v.eos()) {
        ro.finished = true;
      } else {
        still.push_back(active[r]);
      }
    }
    active = std::move(still);
  }
  for (auto& ro : out) ro.text = v.decode(ro.tokens);
  return out;
}

Var token_logprobs(Graph& g, const Policy& policy, const std::vector<SequenceRef>& seqs, double temperature) {
  std::vector<int> layouts, ctx, seq_of_row, targets;
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    const auto& resp = *seqs[s].response;
    if (resp.empty()) throw std::invalid_argument("policy: empty response");
    const auto l = layout_prompt(policy.cfg, *seqs[s].prompt);
    layouts.insert(layouts.end(), l.begin(), l.end());
    for (std::size_t t = 0; t < resp.size(); ++t) {
      append_context(policy.cfg, resp, t, ctx);
      seq_of_row.push_back(static_cast<int>(s));
      targets.push_back(resp[t]);
    }
  }
  Var rows = ops::gather_rows(prompt_hidden(g, policy, layouts), seq_of_row);
  return ops::pick(head(g, policy, rows, ctx, temperature), targets);
}

std::vector<double> token_logprobs_value(const Policy& policy, const std::vector<SequenceRef>& seqs,
                                         double temperature) {
  Graph g;
  const Tensor& t = token_logprobs(g, policy, seqs, temperature).value();
  return {t.values().begin(), t.values().end()};
}

std::vector<double> sequence_logprobs(const Policy& policy, const std::vector<int>& prompt,
                                      const std::vector<int>& response, double temperature) {
  return token_logprobs_value(policy, {{&prompt, &response}}, temperature);
}

double warm_start(Policy& policy, const std::vector<Demonstration>& data, const WarmStartConfig& cfg,
                  std::uint64_t seed) {
  if (data.empty() || cfg.epochs < 1) return 0.0;
  OptimizerConfig adam;
  adam.lr = cfg.lr;
  adam.max_grad_norm = 5.0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double last = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    SeedStream rng(derive_seed(seed, kTagEpoch, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    std::size_t tokens = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch)) {
      std::vector<SequenceRef> seqs;
      std::size_t ntok = 0;
      for (std::size_t k = b; k < std::min(order.size(), b + static_cast<std::size_t>(cfg.batch)); ++k) {
        seqs.push_back({&data[order[k]].prompt, &data[order[k]].response});
        ntok += data[order[k]].response.size();
      }
      const double loss = value_and_grad(policy.params, [&](Graph& g) {
        return ops::scale(ops::mean(token_logprobs(g, policy, seqs, 1.0)), -1.0);
      });
      adam_step(policy.params, adam);
      total += loss * static_cast<double>(ntok);
      tokens += ntok;
    }
    last = total / static_cast<double>(tokens);
  }
  return last;
}

}  // namespace cooper
