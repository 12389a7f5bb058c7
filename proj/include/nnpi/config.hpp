#pragma once

// Structured run configuration: JSON keys mapped onto ScenarioConfig.
// Missing keys keep their defaults, so a config file may be partial.
//
//   {
//     "scenario": "generalized" | "personalized" | "hybrid",
//     "method": "loss_s" | "loss_l" | "bootstrap",
//     "confidences": [0.5, 0.75, 0.85, 0.95],
//     "seed": 0, "jobs": 1, "folds": 10, "min_test_rows": 2,
//     "validation_fraction": 0.1, "clusters": 4, "kmeans_max_iter": 100,
//     "levels": [0, 1, 2, 3, 4], "label_range": null,
//     "network": {"hidden_layers": [32, 32], "activation": "relu"},
//     "gd": {"learning_rate", "decay", "batch_size", "max_epochs",
//            "grad_tol", "grad_check_every", "clip_norm"},
//     "loss_s": {"lambda", "eta" (null = batch size), "softening",
//                "penalty": "squared_hinge" | "literal"},
//     "ga": {"population", "parents_mating", "genes_mutated_pct",
//            "generations", "tournament_size", "elitism", "mutation_scale"},
//     "loss_l": {"eta", "mu" (null = each confidence level)},
//     "bootstrap": {"members", "gd": {...}}
//   }

#include "nnpi/scenarios.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <string>
#include <vector>

namespace nnpi {

struct RunConfig {
  ScenarioKind scenario = ScenarioKind::generalized;
  std::vector<double> confidences = default_confidences();
  ScenarioConfig settings;
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline nlohmann::json gd_to_json(const GDConfig& g) {
  return {{"learning_rate", g.learning_rate}, {"decay", g.decay},
          {"batch_size", g.batch_size},       {"max_epochs", g.max_epochs},
          {"grad_tol", g.grad_tol},           {"grad_check_every", g.grad_check_every},
          {"clip_norm", g.clip_norm}};
}

inline void gd_from_json(const nlohmann::json& j, GDConfig& g) {
  read_opt(j, "learning_rate", g.learning_rate);
  read_opt(j, "decay", g.decay);
  read_opt(j, "batch_size", g.batch_size);
  read_opt(j, "max_epochs", g.max_epochs);
  read_opt(j, "grad_tol", g.grad_tol);
  read_opt(j, "grad_check_every", g.grad_check_every);
  read_opt(j, "clip_norm", g.clip_norm);
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& rc) {
  const auto& s = rc.settings;
  nlohmann::json j;
  j["scenario"] = to_string(rc.scenario);
  j["method"] = to_string(s.method);
  j["confidences"] = rc.confidences;
  j["seed"] = s.seed;
  j["jobs"] = s.jobs;
  j["folds"] = s.folds;
  j["min_test_rows"] = s.min_test_rows;
  j["validation_fraction"] = s.validation_fraction;
  j["clusters"] = s.clusters;
  j["kmeans_max_iter"] = s.kmeans_max_iter;
  j["levels"] = s.levels;
  j["label_range"] = s.label_range ? nlohmann::json(*s.label_range) : nlohmann::json(nullptr);
  j["network"] = {{"hidden_layers", s.net.hidden_layers},
                  {"activation", to_string(s.net.hidden_activation)}};
  j["gd"] = detail::gd_to_json(s.gd);
  j["loss_s"] = {{"lambda", s.loss_s.lambda},
                 {"eta", s.eta_is_batch_size ? nlohmann::json(nullptr) : nlohmann::json(s.loss_s.eta)},
                 {"softening", s.loss_s.softening},
                 {"penalty", s.loss_s.penalty == PenaltyForm::literal ? "literal" : "squared_hinge"}};
  j["ga"] = {{"population", s.ga.population},
             {"parents_mating", s.ga.parents_mating},
             {"genes_mutated_pct", s.ga.genes_mutated_pct},
             {"generations", s.ga.generations},
             {"tournament_size", s.ga.tournament_size},
             {"elitism", s.ga.elitism},
             {"mutation_scale", s.ga.mutation_scale}};
  j["loss_l"] = {{"eta", s.loss_l.eta},
                 {"mu", s.lube_mu ? nlohmann::json(*s.lube_mu) : nlohmann::json(nullptr)}};
  j["bootstrap"] = {{"members", s.bootstrap_members}, {"gd", detail::gd_to_json(s.bootstrap_gd)}};
  return j;
}

/// Overlays the keys present in `j` onto `rc`.
inline void merge_json(RunConfig& rc, const nlohmann::json& j) {
  using detail::read_opt;
  auto& s = rc.settings;
  try {
    if (j.contains("scenario")) rc.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    if (j.contains("method")) s.method = method_from_string(j.at("method").get<std::string>());
    read_opt(j, "confidences", rc.confidences);
    read_opt(j, "seed", s.seed);
    read_opt(j, "jobs", s.jobs);
    read_opt(j, "folds", s.folds);
    read_opt(j, "min_test_rows", s.min_test_rows);
    read_opt(j, "validation_fraction", s.validation_fraction);
    read_opt(j, "clusters", s.clusters);
    read_opt(j, "kmeans_max_iter", s.kmeans_max_iter);
    read_opt(j, "levels", s.levels);
    if (j.contains("label_range"))
      s.label_range = j.at("label_range").is_null() ? std::nullopt
                                                    : std::optional<double>(j.at("label_range").get<double>());
    if (j.contains("network")) {
      const auto& n = j.at("network");
      read_opt(n, "hidden_layers", s.net.hidden_layers);
      if (n.contains("activation"))
        s.net.hidden_activation = activation_from_string(n.at("activation").get<std::string>());
    }
    if (j.contains("gd")) detail::gd_from_json(j.at("gd"), s.gd);
    if (j.contains("loss_s")) {
      const auto& l = j.at("loss_s");
      read_opt(l, "lambda", s.loss_s.lambda);
      read_opt(l, "softening", s.loss_s.softening);
      if (l.contains("eta")) {
        s.eta_is_batch_size = l.at("eta").is_null();
        if (!s.eta_is_batch_size) s.loss_s.eta = l.at("eta").get<double>();
      }
      if (l.contains("penalty")) {
        const auto p = l.at("penalty").get<std::string>();
        if (p == "literal")
          s.loss_s.penalty = PenaltyForm::literal;
        else if (p == "squared_hinge")
          s.loss_s.penalty = PenaltyForm::squared_hinge;
        else
          throw ConfigError("unknown penalty form '" + p + "'");
      }
    }
    if (j.contains("ga")) {
      const auto& g = j.at("ga");
      read_opt(g, "population", s.ga.population);
      read_opt(g, "parents_mating", s.ga.parents_mating);
      read_opt(g, "genes_mutated_pct", s.ga.genes_mutated_pct);
      read_opt(g, "generations", s.ga.generations);
      read_opt(g, "tournament_size", s.ga.tournament_size);
      read_opt(g, "elitism", s.ga.elitism);
      read_opt(g, "mutation_scale", s.ga.mutation_scale);
    }
    if (j.contains("loss_l")) {
      const auto& l = j.at("loss_l");
      read_opt(l, "eta", s.loss_l.eta);
      if (l.contains("mu"))
        s.lube_mu = l.at("mu").is_null() ? std::nullopt : std::optional<double>(l.at("mu").get<double>());
    }
    if (j.contains("bootstrap")) {
      const auto& b = j.at("bootstrap");
      read_opt(b, "members", s.bootstrap_members);
      if (b.contains("gd")) detail::gd_from_json(b.at("gd"), s.bootstrap_gd);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  RunConfig rc;
  merge_json(rc, j);
  return rc;
}

/// Checks everything that can be checked before any data is read.
inline void validate(const RunConfig& rc) {
  const auto& s = rc.settings;
  if (rc.confidences.empty()) throw ConfigError("at least one confidence level is required");
  for (double c : rc.confidences)
    if (!(c > 0.0 && c < 1.0)) throw ConfigError("confidence levels must lie in (0, 1)");
  if (s.folds < 2) throw ConfigError("folds must be >= 2");
  if (s.validation_fraction < 0.0 || s.validation_fraction >= 1.0)
    throw ConfigError("validation_fraction must lie in [0, 1)");
  if (s.clusters < 1) throw ConfigError("clusters must be >= 1");
  if (s.levels.empty()) throw ConfigError("levels must be nonempty");
  MLPConfig probe = s.net;
  probe.input_dim = 1;
  probe.validate();
  switch (s.method) {
    case Method::loss_s:
      s.gd.validate();
      s.soft_for(rc.confidences.front()).validate();
      break;
    case Method::loss_l:
      s.ga.validate();
      s.lube_for(rc.confidences.front()).validate();
      break;
    case Method::bootstrap:
      s.bootstrap_gd.validate();
      if (s.bootstrap_members < 2) throw ConfigError("bootstrap members must be >= 2");
      break;
  }
}

}  // namespace nnpi
