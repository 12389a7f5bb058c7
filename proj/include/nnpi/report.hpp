#pragma once

// Text and JSON emitters for scenario reports, training histories, tuning
// logs and sweep tables, plus (de)serialization of trained runs.

#include "nnpi/config.hpp"
#include "nnpi/scenarios.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace nnpi {

inline constexpr int kRunVersion = 1;

// ---------------------------------------------------------------------------
// Runs

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return {};
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != static_cast<std::size_t>(m.cols())) throw SchemaError("ragged matrix");
    for (std::size_t c = 0; c < rows[i].size(); ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  }
  return m;
}

inline nlohmann::json model_to_json(const Model& m) {
  if (const auto* ens = std::get_if<BootstrapEnsemble>(&m)) return to_json(*ens);
  return to_json(std::get<MLPParams>(m));
}

inline Model model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") == "nnpi-bootstrap") return bootstrap_from_json(j);
  return mlp_params_from_json(j);
}

}  // namespace detail

inline nlohmann::json to_json(const ClusterModel& cm) {
  nlohmann::json profiles = nlohmann::json::array();
  for (const auto& p : cm.profiles) profiles.push_back({{"subject", p.subject_id}, {"values", p.values}});
  return {{"subjects", cm.subjects},
          {"assignments", cm.kmeans.assignments},
          {"centroids", detail::matrix_to_json(cm.kmeans.centroids)},
          {"objective", cm.kmeans.objective},
          {"iterations", cm.kmeans.iterations},
          {"profiles", profiles},
          {"norm", cm.norm.to_json()},
          {"levels", cm.levels}};
}

inline ClusterModel cluster_model_from_json(const nlohmann::json& j) {
  ClusterModel cm;
  cm.subjects = j.at("subjects").get<std::vector<std::string>>();
  cm.kmeans.assignments = j.at("assignments").get<std::vector<std::size_t>>();
  cm.kmeans.centroids = detail::matrix_from_json(j.at("centroids"));
  cm.kmeans.objective = j.at("objective").get<std::vector<double>>();
  cm.kmeans.iterations = j.at("iterations").get<std::size_t>();
  for (const auto& p : j.at("profiles"))
    cm.profiles.push_back({p.at("subject").get<std::string>(), p.at("values").get<std::vector<double>>()});
  cm.norm = NormParams::from_json(j.at("norm"));
  cm.levels = j.at("levels").get<std::vector<double>>();
  if (cm.subjects.size() != cm.kmeans.assignments.size())
    throw SchemaError("cluster assignments do not match subjects");
  return cm;
}

/// Everything except histories, which are written as separate tables.
inline nlohmann::json to_json(const ScenarioRun& run) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : run.groups)
    groups.push_back({{"name", g.name}, {"subjects", g.subjects}, {"rows", g.rows}, {"folds", g.folds}});
  nlohmann::json units = nlohmann::json::array();
  for (const auto& u : run.units)
    units.push_back({{"group", u.group},
                     {"fold", u.fold},
                     {"confidence", u.confidence ? nlohmann::json(*u.confidence) : nlohmann::json(nullptr)},
                     {"norm", u.norm.to_json()},
                     {"test_rows", u.test_rows},
                     {"model", detail::model_to_json(u.model)}});
  return {{"format", "nnpi-run"},
          {"version", kRunVersion},
          {"scenario", to_string(run.kind)},
          {"method", to_string(run.method)},
          {"confidences", run.confidences},
          {"levels", run.levels},
          {"range", run.range},
          {"groups", groups},
          {"units", units},
          {"clusters", run.clusters ? to_json(*run.clusters) : nlohmann::json(nullptr)},
          {"warnings", run.warnings}};
}

inline ScenarioRun run_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "nnpi-run") throw SchemaError("not a run file");
  if (j.value("version", 0) != kRunVersion) throw SchemaError("unsupported run version");
  try {
    ScenarioRun run;
    run.kind = scenario_from_string(j.at("scenario").get<std::string>());
    run.method = method_from_string(j.at("method").get<std::string>());
    run.confidences = j.at("confidences").get<std::vector<double>>();
    run.levels = j.at("levels").get<std::vector<double>>();
    run.range = j.at("range").get<double>();
    for (const auto& g : j.at("groups"))
      run.groups.push_back({g.at("name").get<std::string>(), g.at("subjects").get<std::vector<std::string>>(),
                            g.at("rows").get<Index>(), g.at("folds").get<std::size_t>()});
    for (const auto& u : j.at("units")) {
      TrainedUnit unit;
      unit.group = u.at("group").get<std::size_t>();
      unit.fold = u.at("fold").get<std::size_t>();
      if (!u.at("confidence").is_null()) unit.confidence = u.at("confidence").get<std::size_t>();
      unit.norm = NormParams::from_json(u.at("norm"));
      unit.test_rows = u.at("test_rows").get<Index>();
      unit.model = detail::model_from_json(u.at("model"));
      if (unit.group >= run.groups.size()) throw SchemaError("unit refers to a missing group");
      if (unit.confidence && *unit.confidence >= run.confidences.size())
        throw SchemaError("unit refers to a missing confidence level");
      run.units.push_back(std::move(unit));
    }
    if (!j.at("clusters").is_null()) run.clusters = cluster_model_from_json(j.at("clusters"));
    run.warnings = j.at("warnings").get<std::vector<std::string>>();
    return run;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed run file: ") + e.what());
  }
}

/// Checks that a stored run can be evaluated against `ds`.
inline void check_run_matches(const ScenarioRun& run, const Dataset& ds) {
  for (const auto& u : run.units) {
    if (u.norm.min.size() != static_cast<Eigen::Index>(ds.cols()))
      throw ConfigError("run was trained on " + std::to_string(u.norm.min.size()) +
                        " features, data has " + std::to_string(ds.cols()));
    for (auto r : u.test_rows)
      if (r >= ds.rows()) throw ConfigError("run refers to row " + std::to_string(r) + " beyond the data");
  }
}

// ---------------------------------------------------------------------------
// Report tables

inline std::string percent_label(double confidence) {
  return format_double(confidence * 100.0) + "%";
}

/// Population-level quality: one row per confidence level.
inline void write_quality_table(std::ostream& out, const ScenarioReport& rep, char d = ',') {
  out << "scenario" << d << "method" << d << "confidence" << d << "picp" << d << "mpiw" << d << "nmpiw" << d
      << "crossing_rate\n";
  for (const auto& r : rep.results)
    out << to_string(rep.scenario) << d << to_string(rep.method) << d << percent_label(r.confidence) << d
        << format_fixed(r.quality.picp) << d << format_fixed(r.quality.mpiw) << d
        << format_fixed(r.quality.nmpiw) << d << format_fixed(r.quality.crossing_rate) << '\n';
}

/// Mean bounds per label level, one block per confidence level.
inline void write_level_table(std::ostream& out, const ScenarioReport& rep, char d = ',') {
  out << "confidence" << d << "level" << d << "mean_lower" << d << "mean_upper" << d << "count\n";
  for (const auto& r : rep.results)
    for (const auto& l : r.levels)
      out << percent_label(r.confidence) << d << format_double(l.level) << d << format_fixed(l.mean_lower) << d
          << format_fixed(l.mean_upper) << d << l.count << '\n';
}

/// Per-group (subject or cluster) quality with group size and fold count.
inline void write_group_table(std::ostream& out, const ScenarioReport& rep, char d = ',') {
  out << "group" << d << "subjects" << d << "folds" << d << "confidence" << d << "picp" << d << "mpiw" << d
      << "nmpiw" << d << "crossing_rate\n";
  for (const auto& g : rep.groups)
    for (std::size_t c = 0; c < rep.results.size(); ++c)
      out << g.name << d << g.subjects << d << g.folds << d << percent_label(rep.results[c].confidence) << d
          << format_fixed(g.quality[c].picp) << d << format_fixed(g.quality[c].mpiw) << d
          << format_fixed(g.quality[c].nmpiw) << d << format_fixed(g.quality[c].crossing_rate) << '\n';
}

/// All tables as '# name' sections.
inline void write_report(std::ostream& out, const ScenarioReport& rep, char d = ',') {
  out << "# quality\n";
  write_quality_table(out, rep, d);
  out << "\n# level_bounds\n";
  write_level_table(out, rep, d);
  out << "\n# groups\n";
  write_group_table(out, rep, d);
  out << "\n# warnings\n";
  for (const auto& w : rep.warnings) out << w << '\n';
  for (const auto& g : rep.groups)
    for (std::size_t c = 0; c < g.levels.size(); ++c)
      for (const auto& w : g.levels[c].warnings)
        out << g.name << " at " << percent_label(rep.results[c].confidence) << ": " << w << '\n';
}

inline std::string report_text(const ScenarioReport& rep, char d = ',') {
  std::ostringstream s;
  write_report(s, rep, d);
  return s.str();
}

inline nlohmann::json to_json(const PIQuality& q) {
  return {{"picp", q.picp}, {"mpiw", q.mpiw}, {"nmpiw", q.nmpiw}, {"crossing_rate", q.crossing_rate}};
}

inline nlohmann::json to_json(const ScenarioReport& rep) {
  nlohmann::json results = nlohmann::json::array();
  for (const auto& r : rep.results) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& l : r.levels)
      levels.push_back(
          {{"level", l.level}, {"mean_lower", l.mean_lower}, {"mean_upper", l.mean_upper}, {"count", l.count}});
    results.push_back({{"confidence", r.confidence}, {"quality", to_json(r.quality)}, {"levels", levels}});
  }
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : rep.groups) {
    nlohmann::json q = nlohmann::json::array();
    for (const auto& x : g.quality) q.push_back(to_json(x));
    groups.push_back({{"name", g.name}, {"subjects", g.subjects}, {"folds", g.folds}, {"quality", q}});
  }
  return {{"scenario", to_string(rep.scenario)},
          {"method", to_string(rep.method)},
          {"range", rep.range},
          {"results", results},
          {"groups", groups},
          {"warnings", rep.warnings}};
}

// ---------------------------------------------------------------------------
// Histories, trials, sweeps, distances

namespace detail {

inline std::string opt_number(double v) { return std::isnan(v) ? std::string() : format_double(v); }

}  // namespace detail

inline void write_history(std::ostream& out, const TrainHistory& h) {
  out << "epoch,train_loss,val_loss,picp,mpiw\n";
  for (const auto& e : h)
    out << e.epoch << ',' << detail::opt_number(e.train_loss) << ',' << detail::opt_number(e.val_loss) << ','
        << detail::opt_number(e.picp) << ',' << detail::opt_number(e.mpiw) << '\n';
}

/// File stem for a unit: group index, fold and (optional) confidence index.
inline std::string unit_stem(const TrainedUnit& u) {
  std::string s = "g" + std::to_string(u.group) + "_f" + std::to_string(u.fold);
  if (u.confidence) s += "_c" + std::to_string(*u.confidence);
  return s;
}

/// One JSON object per line, in trial order. Worker count is left out of
/// each trial's config since it never changes results.
inline void write_trial_log(std::ostream& out, const TuneResult& res) {
  for (const auto& t : res.trials) {
    auto cfg = to_json(RunConfig{ScenarioKind::generalized, {t.point.target}, t.point.config});
    cfg.erase("jobs");
    nlohmann::json j{{"trial", t.index},
                     {"target", t.point.target},
                     {"picp", t.outcome.picp},
                     {"mpiw", t.outcome.mpiw},
                     {"shortfall", t.shortfall},
                     {"best", t.index == res.best_index},
                     {"config", cfg}};
    out << j.dump() << '\n';
  }
}

inline void write_sweep(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "softening,lambda,confidence,picp_s,mpiw_s,picp,mpiw\n";
  for (const auto& r : rows)
    out << format_double(r.softening) << ',' << format_double(r.lambda) << ',' << format_double(r.confidence)
        << ',' << format_double(r.picp_s) << ',' << format_double(r.mpiw_s) << ',' << format_double(r.picp)
        << ',' << format_double(r.mpiw) << '\n';
}

/// Pairwise subject distances within each cluster, plus a summary per cluster.
inline void write_cluster_distances(std::ostream& series, std::ostream& summary, const ClusterModel& cm) {
  series << "cluster,subject_a,subject_b,distance\n";
  summary << "cluster,subjects,pairs,mean,q1,median,q3,outliers\n";
  const std::size_t k = static_cast<std::size_t>(cm.kmeans.centroids.rows());
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<SubjectProfile> members;
    for (std::size_t s = 0; s < cm.profiles.size(); ++s)
      if (cm.kmeans.assignments[s] == c) members.push_back(cm.profiles[s]);
    const std::string name = "cluster " + std::to_string(c + 1);
    if (members.size() < 2) {
      summary << name << ',' << members.size() << ",0,,,,,\n";
      continue;
    }
    const auto st = pairwise_distance_stats(members);
    std::size_t p = 0;
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t b = a + 1; b < members.size(); ++b)
        series << name << ',' << members[a].subject_id << ',' << members[b].subject_id << ','
               << format_double(st.distances[p++]) << '\n';
    summary << name << ',' << members.size() << ',' << st.distances.size() << ',' << format_fixed(st.mean) << ','
            << format_fixed(st.q1) << ',' << format_fixed(st.median) << ',' << format_fixed(st.q3) << ','
            << st.outliers << '\n';
  }
}

// ---------------------------------------------------------------------------
// Files

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace nnpi
