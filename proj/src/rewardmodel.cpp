#include "cooper/rewardmodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cooper/taskworld.hpp"
#include "cooper/vocab.hpp"

namespace cooper {

namespace {

constexpr std::uint64_t kTagBag = fnv1a("bag-embedding");
constexpr std::uint64_t kTagInit = fnv1a("rm-init");
constexpr std::uint64_t kTagEpoch = fnv1a("rm-epoch");

// Fixed pseudo-random token embeddings, one table per field.
const std::vector<double>& bag_table(std::size_t field) {
  static std::vector<std::vector<double>> tables = [] {
    std::vector<std::vector<double>> t(3);
    const std::size_t dims[3] = {feature::kBagCompletion, feature::kBagStatement, feature::kBagReference};
    const auto v = static_cast<std::size_t>(Vocab::instance().size());
    for (std::size_t f = 0; f < 3; ++f) {
      SeedStream rng(derive_seed(kTagBag, f));
      t[f].resize(v * dims[f]);
      for (auto& x : t[f]) x = rng.uniform(-1.0, 1.0);
    }
    return t;
  }();
  return tables[field];
}

void bag_mean(const std::vector<int>& ids, std::size_t field, std::size_t dim, double* out) {
  if (ids.empty()) return;
  const auto& table = bag_table(field);
  for (int id : ids)
    for (std::size_t k = 0; k < dim; ++k) out[k] += table[static_cast<std::size_t>(id) * dim + k];
  for (std::size_t k = 0; k < dim; ++k) out[k] /= static_cast<double>(ids.size());
}

std::array<int, 10> digit_hist(std::string_view s) {
  std::array<int, 10> h{};
  for (char c : s)
    if (c >= '0' && c <= '9') ++h[static_cast<std::size_t>(c - '0')];
  return h;
}

bool contains_seq(const std::vector<int>& ids, const std::vector<int>& pat) {
  return std::search(ids.begin(), ids.end(), pat.begin(), pat.end()) != ids.end();
}

Tensor feature_matrix(const RewardModel& rm, const std::vector<FeatureVector>& raw) {
  Tensor x(Shape{raw.size(), feature::kDim});
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const FeatureVector z = rm.norm.apply(raw[i]);
    std::copy(z.begin(), z.end(), x.row(i).begin());
  }
  return x;
}

}  // namespace

FeatureVector featurize(std::string_view statement, std::string_view reference_text, std::string_view completion) {
  using namespace feature;
  const Vocab& v = Vocab::instance();
  FeatureVector f(kDim, 0.0);
  const std::vector<int> ids = v.encode(completion);
  f[kLengthBand] = std::floor(static_cast<double>(ids.size()) / 8.0);
  f[kHasBoxed] = std::count(ids.begin(), ids.end(), v.id("\\boxed{")) > 0;
  f[kHasHash] = std::count(ids.begin(), ids.end(), v.id("####")) > 0;
  f[kHasAnswerIs] = contains_seq(ids, {v.id("the"), v.id("answer"), v.id("is")});
  f[kPhrase] = std::count(ids.begin(), ids.end(), v.phrase()) > 0;

  const auto ref = digit_hist(reference_text);
  const double ref_digits = std::accumulate(ref.begin(), ref.end(), 0);
  f[kRefDigits] = ref_digits;
  const auto tail = last_number(completion);
  double tail_digits = 0.0;
  if (tail) {
    const auto h = digit_hist(*tail);
    f[kHasNumber] = 1.0;
    tail_digits = std::accumulate(h.begin(), h.end(), 0);
    double overlap = 0.0;
    for (std::size_t d = 0; d < 10; ++d) overlap += std::min(h[d], ref[d]);
    f[kOverlap] = overlap;
    const bool tneg = tail->front() == '-', rneg = !reference_text.empty() && reference_text.front() == '-';
    f[kSignMatch] = tneg == rneg;
    const bool tslash = tail->find('/') != std::string::npos;
    const bool rslash = reference_text.find('/') != std::string_view::npos;
    f[kSlashMatch] = tslash == rslash;
  }
  f[kMissing] = ref_digits - f[kOverlap];
  f[kDigitDelta] = tail_digits - ref_digits;
  f[kExcess] = std::max(0.0, tail_digits - ref_digits);
  f[kDeficit] = std::max(0.0, ref_digits - tail_digits);

  std::size_t off = kSurface;
  bag_mean(ids, 0, kBagCompletion, &f[off]);
  off += kBagCompletion;
  bag_mean(v.encode(statement), 1, kBagStatement, &f[off]);
  off += kBagStatement;
  bag_mean(v.encode(reference_text), 2, kBagReference, &f[off]);
  return f;
}

FeatureNorm FeatureNorm::fit(const std::vector<FeatureVector>& rows, double constant_scale) {
  FeatureNorm n;
  if (rows.empty()) return n;
  const auto cnt = static_cast<double>(rows.size());
  for (std::size_t k = 0; k < feature::kDim; ++k) {
    double m = 0.0;
    for (const auto& r : rows) m += r[k];
    m /= cnt;
    double var = 0.0;
    for (const auto& r : rows) var += (r[k] - m) * (r[k] - m);
    const double sd = std::sqrt(var / cnt);
    n.mean[k] = m;
    n.scale[k] = sd > 1e-8 ? sd : constant_scale;
  }
  return n;
}

FeatureVector FeatureNorm::apply(const FeatureVector& raw) const {
  if (raw.size() != feature::kDim)
    throw ShapeError("featurize", "expected " + std::to_string(feature::kDim) + " features, got " +
                                      std::to_string(raw.size()));
  FeatureVector z(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) z[k] = (raw[k] - mean[k]) / scale[k];
  return z;
}

nlohmann::json FeatureNorm::to_json() const { return {{"mean", mean}, {"scale", scale}}; }

FeatureNorm FeatureNorm::from_json(const nlohmann::json& j) {
  FeatureNorm n;
  n.mean = j.at("mean").get<std::vector<double>>();
  n.scale = j.at("scale").get<std::vector<double>>();
  if (n.mean.size() != feature::kDim || n.scale.size() != feature::kDim)
    throw std::invalid_argument("feature normalization has wrong dimension");
  return n;
}

RewardModel init_reward_model(const RMConfig& cfg, std::uint64_t seed) {
  if (cfg.hidden < 1) throw std::invalid_argument("reward model: hidden size must be positive");
  const auto h = static_cast<std::size_t>(cfg.hidden);
  SeedStream rng(derive_seed(seed, kTagInit));
  RewardModel rm{cfg, {}, {}};
  rm.params.add("w1", uniform_tensor({feature::kDim, h}, 1.0 / std::sqrt(static_cast<double>(feature::kDim)), rng));
  rm.params.add("b1", Tensor(Shape{1, h}));
  rm.params.add("w2", Tensor(Shape{h, 1}));
  rm.params.add("b2", Tensor(Shape{1, 1}));
  return rm;
}

Var rm_logits(Graph& g, const RewardModel& rm, const Tensor& features) {
  if (features.rank() != 2 || features.cols() != feature::kDim)
    throw ShapeError("rm_logits", Shape{features.rows(), feature::kDim}, features.shape());
  Var x = g.constant(features);
  Var h = ops::tanh(ops::affine(x, g.parameter(rm.params, "w1"), g.parameter(rm.params, "b1")));
  return ops::affine(h, g.parameter(rm.params, "w2"), g.parameter(rm.params, "b2"));
}

std::vector<RMScore> rm_score_batch(const RewardModel& rm, const std::vector<FeatureVector>& raw) {
  if (raw.empty()) return {};
  Graph g;
  const Tensor& l = rm_logits(g, rm, feature_matrix(rm, raw)).value();
  std::vector<RMScore> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i].logit = l[i];
    out[i].reward = l[i] >= 0 ? 1.0 / (1.0 + std::exp(-l[i])) : std::exp(l[i]) / (1.0 + std::exp(l[i]));
  }
  return out;
}

RMScore rm_score(const RewardModel& rm, const FeatureVector& raw) { return rm_score_batch(rm, {raw})[0]; }

Var bce_loss(Var logits, const std::vector<double>& labels) {
  if (logits.value().size() != labels.size())
    throw ShapeError("bce_loss", logits.shape(), Shape{labels.size(), 1});
  Graph& g = logits.graph();
  Var y = g.constant(Tensor(logits.shape(), labels));
  Var p = ops::clamp(ops::sigmoid(logits), 1e-9, 1.0 - 1e-9);
  Var one_minus_y = ops::add_scalar(ops::scale(y, -1.0), 1.0);
  Var one_minus_p = ops::add_scalar(ops::scale(p, -1.0), 1.0);
  Var ll = ops::add(ops::mul(y, ops::log(p)), ops::mul(one_minus_y, ops::log(one_minus_p)));
  return ops::scale(ops::mean(ll), -1.0);
}

Var contrastive_loss(Var s_pos, Var s_neg) {
  return ops::scale(ops::mean(ops::log_sigmoid(ops::sub(s_pos, s_neg))), -1.0);
}

PretrainResult bce_pretrain(RewardModel& rm, const std::vector<AnnotatedExample>& train,
                            const std::vector<AnnotatedExample>& heldout, std::uint64_t seed) {
  std::size_t pos = 0;
  for (const auto& e : train) pos += e.label == 1;
  if (pos == 0 || pos == train.size())
    throw std::invalid_argument("bce_pretrain: training set holds a single class (" + std::to_string(pos) +
                                " positives of " + std::to_string(train.size()) + " rows)");
  std::vector<FeatureVector> raw;
  raw.reserve(train.size());
  for (const auto& e : train) raw.push_back(featurize(e.statement, e.reference_text, e.completion));
  rm.norm = FeatureNorm::fit(raw, rm.cfg.constant_feature_scale);
  const Tensor x = feature_matrix(rm, raw);

  OptimizerConfig adam;
  adam.lr = rm.cfg.lr;
  adam.weight_decay = rm.cfg.weight_decay;
  PretrainResult res;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(std::max(1, rm.cfg.batch));
  for (int epoch = 0; epoch < rm.cfg.epochs; ++epoch) {
    SeedStream rng(derive_seed(seed, kTagEpoch, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t e = std::min(order.size(), b + bs);
      Tensor xb(Shape{e - b, feature::kDim});
      std::vector<double> yb;
      for (std::size_t k = b; k < e; ++k) {
        const auto src = x.row(order[k]);
        std::copy(src.begin(), src.end(), xb.row(k - b).begin());
        yb.push_back(train[order[k]].label);
      }
      const double loss =
          value_and_grad(rm.params, [&](Graph& g) { return bce_loss(rm_logits(g, rm, xb), yb); });
      adam_step(rm.params, adam);
      total += loss * static_cast<double>(e - b);
    }
    res.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  res.final_loss = res.epoch_loss.empty() ? 0.0 : res.epoch_loss.back();
  res.heldout_accuracy = rm_eval(rm, heldout);
  return res;
}

std::optional<double> contrastive_update(RewardModel& rm, const std::vector<ContrastivePair>& pairs,
                                         const OptimizerConfig& opt) {
  std::vector<FeatureVector> pos, neg;
  for (const auto& p : pairs) {
    if (!p.valid) continue;
    pos.push_back(featurize(p.statement, p.reference_text, p.o_pos));
    neg.push_back(featurize(p.statement, p.reference_text, p.o_neg));
  }
  if (pos.empty()) return std::nullopt;
  const Tensor xp = feature_matrix(rm, pos), xn = feature_matrix(rm, neg);
  const double loss = value_and_grad(rm.params, [&](Graph& g) {
    return contrastive_loss(rm_logits(g, rm, xp), rm_logits(g, rm, xn));
  });
  optimizer_step(rm.params, opt);
  return loss;
}

double rm_eval(const RewardModel& rm, const std::vector<AnnotatedExample>& labeled) {
  if (labeled.empty()) return 0.0;
  std::vector<FeatureVector> raw;
  raw.reserve(labeled.size());
  for (const auto& e : labeled) raw.push_back(featurize(e.statement, e.reference_text, e.completion));
  const auto scores = rm_score_batch(rm, raw);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < labeled.size(); ++i) ok += (scores[i].reward > 0.5) == (labeled[i].label == 1);
  return static_cast<double>(ok) / static_cast<double>(labeled.size());
}

double phrase_effect(const RewardModel& rm, const std::vector<FeatureVector>& raw) {
  if (raw.empty()) return 0.0;
  std::vector<FeatureVector> on = raw, off = raw;
  for (auto& f : on) f[feature::kPhrase] = 1.0;
  for (auto& f : off) f[feature::kPhrase] = 0.0;
  const auto a = rm_score_batch(rm, on), b = rm_score_batch(rm, off);
  double s = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) s += a[i].reward - b[i].reward;
  return s / static_cast<double>(raw.size());
}

}  // namespace cooper
