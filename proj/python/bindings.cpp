// Thin Python surface over the core library. Structured results cross the
// boundary as JSON text; cooper_rl/__init__.py decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "cooper/annotate.hpp"
#include "cooper/config.hpp"
#include "cooper/errors.hpp"
#include "cooper/grpo.hpp"
#include "cooper/metrics_io.hpp"
#include "cooper/rewardmodel.hpp"
#include "cooper/taskworld.hpp"
#include "cooper/verifier.hpp"

namespace py = pybind11;
using namespace cooper;

namespace {

RunConfig resolve(std::uint64_t seed, const std::map<std::string, std::string>& overrides) {
  RunConfig cfg;
  cfg.seed = seed;
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

std::string verdict_json(const std::string& reference, const std::string& completion) {
  const Verdict v = rule_verdict(reference, completion);
  nlohmann::ordered_json j;
  j["outcome"] = outcome_name(v.outcome);
  j["extracted"] = v.extracted ? nlohmann::ordered_json(render(*v.extracted)) : nlohmann::ordered_json();
  j["marker"] = v.raw ? nlohmann::ordered_json(marker_name(v.raw->marker)) : nlohmann::ordered_json();
  return j.dump();
}

std::string corpus_json(std::uint64_t seed, const std::map<std::string, std::string>& overrides) {
  const RunConfig cfg = resolve(seed, overrides);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : build_corpus(cfg.world, seed).rows) rows.push_back(corpus_row_to_json(r));
  return rows.dump();
}

std::string annotate_json(std::uint64_t seed, const std::map<std::string, std::string>& overrides) {
  const RunConfig cfg = resolve(seed, overrides);
  return annotate_rows(build_corpus(cfg.world, seed).rows, cfg.judge, seed).report.to_json().dump();
}

std::string summarize_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& s : summarize(read_metrics_csv(in))) out.push_back(s.to_json());
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  m.def("rule_verdict_json", &verdict_json, py::arg("reference"), py::arg("completion"));
  m.def("oracle_correct", [](const std::string& reference, const std::string& text) {
    return oracle_correct(canonicalize(reference), text);
  }, py::arg("reference"), py::arg("completion"));
  m.def("compute_advantages", &compute_advantages, py::arg("rewards"));
  m.def("featurize", [](const std::string& s, const std::string& ref, const std::string& c) {
    return featurize(s, ref, c);
  }, py::arg("statement"), py::arg("reference"), py::arg("completion"));
  m.def("feature_dim", [] { return feature::kDim; });
  m.def("corpus_json", &corpus_json, py::arg("seed"), py::arg("overrides") = std::map<std::string, std::string>{});
  m.def("annotate_json", &annotate_json, py::arg("seed"), py::arg("overrides") = std::map<std::string, std::string>{});
  m.def("resolved_config_json", [](std::uint64_t seed, const std::map<std::string, std::string>& overrides) {
    return resolve(seed, overrides).to_json().dump();
  }, py::arg("seed"), py::arg("overrides") = std::map<std::string, std::string>{});
  m.def("summarize_metrics_json", &summarize_json, py::arg("path"));
}
