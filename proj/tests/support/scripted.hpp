#pragma once

#include <vector>

#include "cooper/policy.hpp"
#include "cooper/vocab.hpp"

namespace cooper::testing {

/// A policy that ignores its prompt: at position t it samples uniformly from
/// choices[t] (logit `strength` each, all other tokens 0). The position
/// embedding is one-hot in dimension t, routed through hidden unit t.
inline Policy scripted_policy(const std::vector<std::vector<int>>& choices, double strength = 40.0) {
  PolicyConfig c;
  c.embed = 16;
  c.hidden = 16;
  Policy p = init_policy(c, 1);
  for (const auto& n : p.params.names())
    for (auto& v : p.params.value_mut(n).values()) v = 0.0;
  auto& embed = p.params.value_mut("embed");
  auto& w1c = p.params.value_mut("w1c");
  auto& w2 = p.params.value_mut("w2");
  const auto vocab = static_cast<std::size_t>(Vocab::instance().size());
  const auto pos_slot = static_cast<std::size_t>(c.context) * 16;
  for (std::size_t t = 0; t < choices.size() && t < 16; ++t) {
    embed.at(vocab + t, t) = 1.0;
    w1c.at(pos_slot + t, t) = 5.0;
    for (int tok : choices[t]) w2.at(t, static_cast<std::size_t>(tok)) = strength;
  }
  return p;
}

/// Deterministic script for `text` followed by <eos>.
inline Policy fixed_text_policy(std::string_view text) {
  const Vocab& v = Vocab::instance();
  std::vector<std::vector<int>> choices;
  for (int id : v.encode(text)) choices.push_back({id});
  choices.push_back({v.eos()});
  return scripted_policy(choices);
}

}  // namespace cooper::testing
