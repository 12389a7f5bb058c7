#pragma once

// Deployment scenarios (generalized, personalized, cluster-based hybrid)
// evaluated under k-fold cross-validation, plus random hyperparameter search
// and the softening-factor sweep.

#include "nnpi/bootstrap.hpp"
#include "nnpi/core.hpp"
#include "nnpi/data.hpp"
#include "nnpi/kmeans.hpp"
#include "nnpi/losses.hpp"
#include "nnpi/metrics.hpp"
#include "nnpi/network.hpp"
#include "nnpi/optimizers.hpp"
#include "nnpi/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace nnpi {

enum class Method { loss_s, loss_l, bootstrap };
enum class ScenarioKind { generalized, personalized, hybrid };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::loss_s: return "loss_s";
    case Method::loss_l: return "loss_l";
    default: return "bootstrap";
  }
}

inline Method method_from_string(const std::string& s) {
  if (s == "loss_s") return Method::loss_s;
  if (s == "loss_l") return Method::loss_l;
  if (s == "bootstrap") return Method::bootstrap;
  throw ConfigError("unknown method '" + s + "'");
}

inline std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::generalized: return "generalized";
    case ScenarioKind::personalized: return "personalized";
    default: return "hybrid";
  }
}

inline ScenarioKind scenario_from_string(const std::string& s) {
  if (s == "generalized") return ScenarioKind::generalized;
  if (s == "personalized") return ScenarioKind::personalized;
  if (s == "hybrid") return ScenarioKind::hybrid;
  throw ConfigError("unknown scenario '" + s + "'");
}

inline const std::vector<double>& default_confidences() {
  static const std::vector<double> levels{0.50, 0.75, 0.85, 0.95};
  return levels;
}

struct ScenarioConfig {
  Method method = Method::loss_s;
  MLPConfig net;  // input_dim and output_dim are set from the data and method

  GDConfig gd{.learning_rate = 0.02,
              .decay = 1e-5,
              .batch_size = 128,
              .max_epochs = 300,
              .grad_tol = 1e-5,
              .grad_check_every = 10,
              .clip_norm = 1.0};
  LossSConfig loss_s;     // alpha is replaced by 1 - confidence
  bool eta_is_batch_size = true;

  GAConfig ga;
  LossLConfig loss_l;  // mu is replaced by the confidence unless lube_mu is set
  std::optional<double> lube_mu;

  std::size_t bootstrap_members = 20;
  GDConfig bootstrap_gd{.learning_rate = 0.05,
                        .decay = 1e-5,
                        .batch_size = 64,
                        .max_epochs = 40,
                        .grad_tol = 1e-5,
                        .grad_check_every = 10,
                        .clip_norm = 0.0};

  std::size_t folds = 10;
  std::size_t min_test_rows = 2;  // fold count shrinks so every test fold has this many
  double validation_fraction = 0.1;
  std::size_t clusters = 4;
  std::size_t kmeans_max_iter = 100;
  std::vector<double> levels{0, 1, 2, 3, 4};
  std::optional<double> label_range;  // R for NMPIW; defaults to the dataset's range
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  /// Soft-loss settings for a given target coverage.
  LossSConfig soft_for(double confidence) const {
    LossSConfig c = loss_s;
    c.alpha = 1.0 - confidence;
    if (eta_is_batch_size) c.eta = static_cast<double>(gd.batch_size);
    return c;
  }

  LossLConfig lube_for(double confidence) const {
    LossLConfig c = loss_l;
    c.mu = lube_mu.value_or(confidence);
    c.mode = LubeMode::train;
    return c;
  }
};

// ---------------------------------------------------------------------------
// Trained units and runs

using Model = std::variant<MLPParams, BootstrapEnsemble>;

/// One trained model for one (group, fold[, confidence]) cell.
struct TrainedUnit {
  std::size_t group = 0;
  std::size_t fold = 0;
  /// Index into the run's confidences; empty for bootstrap (serves every level).
  std::optional<std::size_t> confidence;
  NormParams norm;
  Index test_rows;  // global dataset rows
  Model model;
  TrainHistory history;
};

/// A set of rows modelled separately: the whole population, one subject, or
/// one cluster of subjects.
struct UnitGroup {
  std::string name;
  std::vector<std::string> subjects;
  Index rows;
  std::size_t folds = 0;
};

struct ClusterModel {
  KMeansResult kmeans;
  std::vector<std::string> subjects;  // profile order
  std::vector<SubjectProfile> profiles;
  NormParams norm;                    // normalization used to build profiles
  std::vector<double> levels;

  /// Cluster for a new subject's profile: nearest centroid, lowest index on ties.
  std::size_t route(const SubjectProfile& p) const {
    if (static_cast<Eigen::Index>(p.values.size()) != kmeans.centroids.cols())
      throw ShapeError("profile length does not match centroids");
    return nearest_centroid(kmeans.centroids,
                            Eigen::Map<const Eigen::RowVectorXd>(p.values.data(), kmeans.centroids.cols()));
  }

  /// Routes a new subject given its raw (unnormalized) rows.
  std::size_t route(const Dataset& subject_rows) const {
    const auto set = subject_profiles(norm.apply(subject_rows), levels);
    if (set.profiles.size() != 1) throw ConfigError("route() expects rows of exactly one subject");
    return route(set.profiles.front());
  }
};

struct ScenarioRun {
  ScenarioKind kind = ScenarioKind::generalized;
  Method method = Method::loss_s;
  std::vector<double> confidences;
  std::vector<double> levels;
  double range = 1.0;
  std::vector<UnitGroup> groups;
  std::vector<TrainedUnit> units;
  std::optional<ClusterModel> clusters;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Reports

struct ConfidenceResult {
  double confidence = 0.0;
  PIQuality quality;                // averaged over folds, then over groups
  std::vector<LevelBounds> levels;  // averaged over groups
};

struct GroupResult {
  std::string name;
  std::size_t subjects = 0;
  std::size_t folds = 0;
  std::vector<PIQuality> quality;  // per confidence, averaged over folds
  std::vector<LevelTable> levels;  // per confidence, out-of-fold predictions
};

struct ScenarioReport {
  ScenarioKind scenario = ScenarioKind::generalized;
  Method method = Method::loss_s;
  double range = 1.0;
  std::vector<ConfidenceResult> results;
  std::vector<GroupResult> groups;
  std::vector<std::string> warnings;
};

/// Predicts the unit's test rows at confidence index `c`.
inline IntervalBatch predict_unit(const Dataset& ds, const ScenarioRun& run, const TrainedUnit& unit,
                                  std::size_t c) {
  const Matrix x = unit.norm.apply(take_rows(ds.features, unit.test_rows));
  if (const auto* ens = std::get_if<BootstrapEnsemble>(&unit.model))
    return bootstrap_pi(*ens, x, run.confidences[c]);
  return forward(std::get<MLPParams>(unit.model), x);
}

/// Evaluates every unit on its test rows and aggregates: folds are averaged
/// within a group, then groups are averaged.
inline ScenarioReport assemble_report(const Dataset& ds, const ScenarioRun& run) {
  ScenarioReport rep;
  rep.scenario = run.kind;
  rep.method = run.method;
  rep.range = run.range;
  rep.warnings = run.warnings;
  const std::size_t nc = run.confidences.size();

  struct Pool {
    std::vector<PIQuality> folds;
    std::vector<double> y, lo, hi;
  };
  std::vector<std::vector<Pool>> pools(run.groups.size(), std::vector<Pool>(nc));
  for (const auto& unit : run.units) {
    for (std::size_t c = 0; c < nc; ++c) {
      if (unit.confidence && *unit.confidence != c) continue;
      const IntervalBatch iv = predict_unit(ds, run, unit, c);
      const Vector y = take(ds.labels, unit.test_rows);
      auto& pool = pools[unit.group][c];
      pool.folds.push_back(assess(y, iv, run.range));
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        pool.y.push_back(y[i]);
        pool.lo.push_back(iv.lower[i]);
        pool.hi.push_back(iv.upper[i]);
      }
    }
  }

  for (std::size_t g = 0; g < run.groups.size(); ++g) {
    GroupResult gr;
    gr.name = run.groups[g].name;
    gr.subjects = run.groups[g].subjects.size();
    gr.folds = run.groups[g].folds;
    for (std::size_t c = 0; c < nc; ++c) {
      auto& pool = pools[g][c];
      gr.quality.push_back(mean_quality(pool.folds));
      const auto m = static_cast<Eigen::Index>(pool.y.size());
      const Vector y = Eigen::Map<Vector>(pool.y.data(), m);
      const IntervalBatch iv{Eigen::Map<Vector>(pool.lo.data(), m), Eigen::Map<Vector>(pool.hi.data(), m)};
      gr.levels.push_back(per_level_bounds(y, iv, run.levels));
    }
    rep.groups.push_back(std::move(gr));
  }

  for (std::size_t c = 0; c < nc; ++c) {
    ConfidenceResult cr;
    cr.confidence = run.confidences[c];
    std::vector<PIQuality> per_group;
    for (const auto& g : rep.groups) per_group.push_back(g.quality[c]);
    cr.quality = mean_quality(per_group);
    for (double level : run.levels) {
      LevelBounds acc{level, 0.0, 0.0, 0};
      std::size_t groups_with_level = 0;
      for (const auto& g : rep.groups)
        for (const auto& row : g.levels[c].rows)
          if (row.level == level) {
            acc.mean_lower += row.mean_lower;
            acc.mean_upper += row.mean_upper;
            acc.count += row.count;
            ++groups_with_level;
          }
      if (groups_with_level == 0) continue;
      acc.mean_lower /= static_cast<double>(groups_with_level);
      acc.mean_upper /= static_cast<double>(groups_with_level);
      cr.levels.push_back(acc);
    }
    rep.results.push_back(std::move(cr));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

struct FoldData {
  NormParams norm;
  Split train;
  Split val;
  Index test_rows;
  double label_min = 0.0;
  double label_max = 0.0;
};

/// Normalizes on the fold's training rows and carves a seeded validation
/// subset out of them.
inline FoldData prepare_fold(const Dataset& ds, const Index& train_rows, const Index& test_rows,
                             const ScenarioConfig& cfg, std::size_t fold) {
  FoldData f;
  f.test_rows = test_rows;
  const Matrix raw = take_rows(ds.features, train_rows);
  f.norm = fit_minmax(raw);
  const Matrix x = f.norm.apply(raw);
  const Vector y = take(ds.labels, train_rows);
  f.label_min = y.minCoeff();
  f.label_max = y.maxCoeff();

  const std::size_t n = train_rows.size();
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(n)));
  if (n_val == 0 || n - n_val < 2) {
    f.train = {x, y};
    return f;
  }
  Index order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(cfg.seed, fold, 0x7a1));
  std::shuffle(order.begin(), order.end(), rng);
  Index tr(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  Index va(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(tr.begin(), tr.end());
  std::sort(va.begin(), va.end());
  f.train = {take_rows(x, tr), take(y, tr)};
  f.val = {take_rows(x, va), take(y, va)};
  return f;
}

inline MLPConfig network_for(const ScenarioConfig& cfg, std::size_t input_dim, std::size_t outputs) {
  MLPConfig net = cfg.net;
  net.input_dim = input_dim;
  net.output_dim = outputs;
  net.validate();
  return net;
}

/// Trains the model for one (fold, confidence) cell. For bootstrap the
/// confidence is ignored.
inline TrainedUnit train_cell(const FoldData& f, const ScenarioConfig& cfg,
                              const std::vector<double>& confidences, std::size_t fold,
                              std::optional<std::size_t> c, std::size_t input_dim) {
  TrainedUnit unit;
  unit.fold = fold;
  unit.confidence = c;
  unit.norm = f.norm;
  unit.test_rows = f.test_rows;
  const std::uint64_t cell_seed = derive_seed(cfg.seed, fold, c ? *c + 1 : 0, 0xce11);
  switch (cfg.method) {
    case Method::loss_s: {
      const MLPConfig net = network_for(cfg, input_dim, 2);
      GDConfig gd = cfg.gd;
      gd.seed = derive_seed(cell_seed, 1);
      auto r = gd_train(init(net, derive_seed(cell_seed, 2), f.label_min, f.label_max), f.train,
                        f.val, cfg.soft_for(confidences[*c]), gd);
      unit.model = std::move(r.params);
      unit.history = std::move(r.history);
      break;
    }
    case Method::loss_l: {
      const MLPConfig net = network_for(cfg, input_dim, 2);
      GAConfig ga = cfg.ga;
      ga.seed = derive_seed(cell_seed, 3);
      auto r = ga_train(net, f.train, f.val, cfg.lube_for(confidences[*c]), ga, f.label_min,
                        f.label_max);
      unit.model = std::move(r.params);
      unit.history = std::move(r.history);
      break;
    }
    case Method::bootstrap: {
      const MLPConfig net = network_for(cfg, input_dim, 1);
      Split all = f.train;
      if (!f.val.empty()) {
        all.x.conservativeResize(f.train.x.rows() + f.val.x.rows(), Eigen::NoChange);
        all.x.bottomRows(f.val.x.rows()) = f.val.x;
        all.y.conservativeResize(f.train.y.size() + f.val.y.size());
        all.y.tail(f.val.y.size()) = f.val.y;
      }
      unit.model = bootstrap_train(all, cfg.bootstrap_members, net, cfg.bootstrap_gd,
                                   derive_seed(cell_seed, 4));
      break;
    }
  }
  return unit;
}

/// Folds usable for `n` rows: at most cfg.folds, each test fold holding at
/// least cfg.min_test_rows rows. Returns 0 when CV is infeasible.
inline std::size_t feasible_folds(std::size_t n, const ScenarioConfig& cfg) {
  const std::size_t k = std::min(cfg.folds, n / std::max<std::size_t>(cfg.min_test_rows, 1));
  return k >= 2 ? k : 0;
}

}  // namespace detail

/// Trains every (group, fold, confidence) cell of a run. Cells are
/// independent and may execute in parallel; results keep job order.
inline void train_groups(const Dataset& ds, const ScenarioConfig& cfg, ScenarioRun& run) {
  struct Job {
    std::size_t group, fold;
    std::optional<std::size_t> confidence;
  };
  std::vector<std::vector<Fold>> group_folds(run.groups.size());
  std::vector<Job> jobs;
  for (std::size_t g = 0; g < run.groups.size(); ++g) {
    const auto& grp = run.groups[g];
    group_folds[g] = kfold_split(grp.rows.size(), grp.folds, cfg.seed);
    for (std::size_t f = 0; f < grp.folds; ++f) {
      if (cfg.method == Method::bootstrap)
        jobs.push_back({g, f, std::nullopt});
      else
        for (std::size_t c = 0; c < run.confidences.size(); ++c) jobs.push_back({g, f, c});
    }
  }
  std::vector<TrainedUnit> units(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t j) {
    const auto& job = jobs[j];
    const auto& grp = run.groups[job.group];
    const auto& fold = group_folds[job.group][job.fold];
    Index train_rows, test_rows;
    for (auto i : fold.train) train_rows.push_back(grp.rows[i]);
    for (auto i : fold.test) test_rows.push_back(grp.rows[i]);
    const auto fd = detail::prepare_fold(ds, train_rows, test_rows, cfg, job.fold);
    units[j] = detail::train_cell(fd, cfg, run.confidences, job.fold, job.confidence, ds.cols());
    units[j].group = job.group;
  });
  run.units = std::move(units);
}

namespace detail {

inline ScenarioRun make_run(const Dataset& ds, ScenarioKind kind, const ScenarioConfig& cfg,
                            const std::vector<double>& confidences) {
  ds.validate();
  if (confidences.empty()) throw ConfigError("at least one confidence level is required");
  for (double c : confidences)
    if (!(c > 0.0 && c < 1.0)) throw ConfigError("confidence levels must lie in (0, 1)");
  ScenarioRun run;
  run.kind = kind;
  run.method = cfg.method;
  run.confidences = confidences;
  std::sort(run.confidences.begin(), run.confidences.end());
  run.levels = cfg.levels;
  run.range = cfg.label_range.value_or(ds.label_range());
  if (std::isinf(run.range)) throw NumericalError("label range overflows to infinity");
  if (!(run.range > 0.0)) throw ConfigError("label range R must be positive");
  return run;
}

}  // namespace detail

/// One model for the whole population.
inline ScenarioRun train_generalized(const Dataset& ds, const ScenarioConfig& cfg,
                                     const std::vector<double>& confidences) {
  auto run = detail::make_run(ds, ScenarioKind::generalized, cfg, confidences);
  UnitGroup g;
  g.name = "all";
  g.subjects = ds.subjects();
  g.rows.resize(ds.rows());
  std::iota(g.rows.begin(), g.rows.end(), std::size_t{0});
  g.folds = detail::feasible_folds(ds.rows(), cfg);
  if (g.folds == 0) throw ConfigError("too few rows for cross-validation");
  run.groups.push_back(std::move(g));
  train_groups(ds, cfg, run);
  return run;
}

/// One model per subject, each trained on that subject's rows only.
inline ScenarioRun train_personalized(const Dataset& ds, const ScenarioConfig& cfg,
                                      const std::vector<double>& confidences) {
  auto run = detail::make_run(ds, ScenarioKind::personalized, cfg, confidences);
  for (auto& [id, rows] : ds.rows_by_subject()) {
    const std::size_t k = detail::feasible_folds(rows.size(), cfg);
    if (k == 0) {
      run.warnings.push_back("subject " + id + " skipped: " + std::to_string(rows.size()) +
                             " rows is too few for cross-validation");
      continue;
    }
    if (k < cfg.folds)
      run.warnings.push_back("subject " + id + " uses " + std::to_string(k) + " folds");
    run.groups.push_back({id, {id}, rows, k});
  }
  if (run.groups.empty()) throw ConfigError("no subject has enough rows for cross-validation");
  train_groups(ds, cfg, run);
  return run;
}

/// Clusters subjects by their profiles (features normalized over the whole
/// dataset) so every cluster keeps one identity across folds.
inline ClusterModel cluster_subjects(const Dataset& ds, const ScenarioConfig& cfg) {
  ClusterModel cm;
  auto normalized = minmax_normalize(ds);
  cm.norm = normalized.params;
  cm.levels = cfg.levels;
  auto set = subject_profiles(normalized.data, cfg.levels);
  cm.profiles = std::move(set.profiles);
  for (const auto& p : cm.profiles) cm.subjects.push_back(p.subject_id);
  cm.kmeans = kmeans(cm.profiles, cfg.clusters, derive_seed(cfg.seed, 0x6b6d), cfg.kmeans_max_iter);
  return cm;
}

/// One model per k-means cluster of subjects.
inline ScenarioRun train_hybrid(const Dataset& ds, const ScenarioConfig& cfg,
                                const std::vector<double>& confidences) {
  auto run = detail::make_run(ds, ScenarioKind::hybrid, cfg, confidences);
  if (ds.subjects().size() < cfg.clusters)
    throw ConfigError("hybrid scenario needs at least k subjects");
  ClusterModel cm = cluster_subjects(ds, cfg);

  std::vector<UnitGroup> groups(cfg.clusters);
  std::vector<std::size_t> cluster_of(cm.subjects.size());
  for (std::size_t s = 0; s < cm.subjects.size(); ++s) {
    cluster_of[s] = cm.kmeans.assignments[s];
    groups[cluster_of[s]].subjects.push_back(cm.subjects[s]);
  }
  std::unordered_map<std::string, std::size_t> subject_index;
  for (std::size_t s = 0; s < cm.subjects.size(); ++s) subject_index[cm.subjects[s]] = s;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    groups[cluster_of[subject_index[ds.subject_ids[i]]]].rows.push_back(i);

  for (std::size_t c = 0; c < groups.size(); ++c) {
    auto& g = groups[c];
    g.name = "cluster " + std::to_string(c + 1);
    g.folds = detail::feasible_folds(g.rows.size(), cfg);
    if (g.folds == 0) {
      run.warnings.push_back(g.name + " skipped: too few rows for cross-validation");
      continue;
    }
    if (g.folds < cfg.folds)
      run.warnings.push_back(g.name + " uses " + std::to_string(g.folds) + " folds");
    run.groups.push_back(std::move(g));
  }
  if (run.groups.empty()) throw ConfigError("no cluster has enough rows for cross-validation");
  run.clusters = std::move(cm);
  train_groups(ds, cfg, run);
  return run;
}

inline ScenarioRun train_scenario(const Dataset& ds, ScenarioKind kind, const ScenarioConfig& cfg,
                                  const std::vector<double>& confidences) {
  switch (kind) {
    case ScenarioKind::generalized: return train_generalized(ds, cfg, confidences);
    case ScenarioKind::personalized: return train_personalized(ds, cfg, confidences);
    default: return train_hybrid(ds, cfg, confidences);
  }
}

inline ScenarioReport run_generalized(const Dataset& ds, const ScenarioConfig& cfg,
                                      const std::vector<double>& confidences = default_confidences()) {
  return assemble_report(ds, train_generalized(ds, cfg, confidences));
}

inline ScenarioReport run_personalized(const Dataset& ds, const ScenarioConfig& cfg,
                                       const std::vector<double>& confidences = default_confidences()) {
  return assemble_report(ds, train_personalized(ds, cfg, confidences));
}

inline ScenarioReport run_hybrid(const Dataset& ds, const ScenarioConfig& cfg,
                                 const std::vector<double>& confidences = default_confidences()) {
  return assemble_report(ds, train_hybrid(ds, cfg, confidences));
}

// ---------------------------------------------------------------------------
// Hyperparameter search

template <typename T>
struct Range {
  T lo;
  T hi;

  bool contains(T v) const { return lo <= v && v <= hi; }
};

struct SearchSpace {
  Range<std::size_t> hidden_layers{1, 4};
  Range<std::size_t> hidden_width{10, 150};
  std::vector<Activation> activations{Activation::relu, Activation::tanh, Activation::linear};

  Range<std::size_t> ga_population{10, 20};
  Range<std::size_t> ga_parents{5, 10};
  Range<double> ga_genes_pct{10.0, 20.0};
  Range<double> lube_eta{25.0, 100.0};
  Range<double> lube_mu{0.5, 0.95};

  Range<double> learning_rate{0.001, 0.1};
  Range<double> decay{1e-6, 1e-4};
  Range<double> soft_lambda{5.0, 30.0};
  Range<double> soft_eta{35.0, 240.0};
  Range<double> soft_mu{0.5, 0.95};
  Range<double> softening{10.0, 220.0};

  /// Pins both coverage targets to `confidence`.
  SearchSpace& target(double confidence) {
    lube_mu = {confidence, confidence};
    soft_mu = {confidence, confidence};
    return *this;
  }
};

struct TrialPoint {
  ScenarioConfig config;
  double target = 0.0;  // coverage target for the trial's method
};

inline bool in_space(const SearchSpace& sp, const TrialPoint& t) {
  const auto& c = t.config;
  if (!sp.hidden_layers.contains(c.net.hidden_layers.size())) return false;
  for (auto w : c.net.hidden_layers)
    if (!sp.hidden_width.contains(w)) return false;
  if (std::find(sp.activations.begin(), sp.activations.end(), c.net.hidden_activation) ==
      sp.activations.end())
    return false;
  const double mu_soft = 1.0 - c.loss_s.alpha;
  return sp.ga_population.contains(c.ga.population) && sp.ga_parents.contains(c.ga.parents_mating) &&
         sp.ga_genes_pct.contains(c.ga.genes_mutated_pct) && sp.lube_eta.contains(c.loss_l.eta) &&
         sp.lube_mu.contains(c.loss_l.mu) && sp.learning_rate.contains(c.gd.learning_rate) &&
         sp.decay.contains(c.gd.decay) && sp.soft_lambda.contains(c.loss_s.lambda) &&
         sp.soft_eta.contains(c.loss_s.eta) && sp.softening.contains(c.loss_s.softening) &&
         sp.soft_mu.lo - 1e-12 <= mu_soft && mu_soft <= sp.soft_mu.hi + 1e-12;
}

/// Uniform draw of every tunable from its range; other fields come from `base`.
inline TrialPoint sample_trial(const SearchSpace& sp, const ScenarioConfig& base, std::mt19937_64& rng) {
  auto uni = [&](const Range<double>& r) {
    return r.lo == r.hi ? r.lo : std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
  };
  auto uint = [&](const Range<std::size_t>& r) {
    return std::uniform_int_distribution<std::size_t>(r.lo, r.hi)(rng);
  };
  TrialPoint t{base, 0.0};
  auto& c = t.config;
  const std::size_t layers = uint(sp.hidden_layers);
  c.net.hidden_layers.clear();
  for (std::size_t l = 0; l < layers; ++l) c.net.hidden_layers.push_back(uint(sp.hidden_width));
  c.net.hidden_activation =
      sp.activations[std::uniform_int_distribution<std::size_t>(0, sp.activations.size() - 1)(rng)];
  c.ga.population = uint(sp.ga_population);
  c.ga.parents_mating = uint(sp.ga_parents);
  c.ga.genes_mutated_pct = uni(sp.ga_genes_pct);
  c.loss_l.eta = uni(sp.lube_eta);
  c.loss_l.mu = uni(sp.lube_mu);
  c.lube_mu = c.loss_l.mu;
  c.gd.learning_rate = uni(sp.learning_rate);
  c.gd.decay = uni(sp.decay);
  c.loss_s.lambda = uni(sp.soft_lambda);
  c.loss_s.eta = uni(sp.soft_eta);
  c.eta_is_batch_size = false;
  c.loss_s.alpha = 1.0 - uni(sp.soft_mu);
  c.loss_s.softening = uni(sp.softening);
  t.target = base.method == Method::loss_l ? c.loss_l.mu : 1.0 - c.loss_s.alpha;
  return t;
}

struct TrialOutcome {
  double picp = 0.0;
  double mpiw = 0.0;
};

struct TrialRecord {
  std::size_t index = 0;
  TrialPoint point;
  TrialOutcome outcome;
  double shortfall = 0.0;  // max(0, target - PICP)
};

struct TuneResult {
  TrialPoint best;
  std::size_t best_index = 0;
  std::vector<TrialRecord> trials;
};

/// Seeded random search. Trials are ranked by coverage shortfall, then MPIW,
/// then trial index.
inline TuneResult tune(const SearchSpace& space, const ScenarioConfig& base, std::size_t budget,
                       const std::function<TrialOutcome(const TrialPoint&)>& objective,
                       std::uint64_t seed) {
  if (budget < 1) throw ConfigError("tuning budget must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<TrialPoint> points;
  for (std::size_t i = 0; i < budget; ++i) points.push_back(sample_trial(space, base, rng));
  TuneResult res;
  res.trials.resize(budget);
  parallel_for(budget, base.jobs, [&](std::size_t i) {
    const TrialOutcome o = objective(points[i]);
    res.trials[i] = {i, points[i], o, std::max(0.0, points[i].target - o.picp)};
  });
  for (std::size_t i = 1; i < budget; ++i) {
    const auto& a = res.trials[i];
    const auto& b = res.trials[res.best_index];
    if (a.shortfall < b.shortfall || (a.shortfall == b.shortfall && a.outcome.mpiw < b.outcome.mpiw))
      res.best_index = i;
  }
  res.best = res.trials[res.best_index].point;
  return res;
}

/// Trains the trial's method on fold 0 of the configured split (minus a
/// validation carve) and scores it on that fold's held-out rows.
inline std::function<TrialOutcome(const TrialPoint&)> holdout_objective(const Dataset& ds) {
  return [&ds](const TrialPoint& t) {
    ScenarioConfig cfg = t.config;
    cfg.jobs = 1;
    const auto folds = kfold_split(ds, std::min(cfg.folds, ds.rows()), cfg.seed);
    const auto fd = detail::prepare_fold(ds, folds[0].train, folds[0].test, cfg, 0);
    cfg.loss_s.alpha = 1.0 - t.target;
    cfg.eta_is_batch_size = false;
    cfg.lube_mu = t.target;
    const auto unit = detail::train_cell(fd, cfg, {t.target}, 0, std::size_t{0}, ds.cols());
    ScenarioRun run;
    run.confidences = {t.target};
    const IntervalBatch iv = predict_unit(ds, run, unit, 0);
    const Vector y = take(ds.labels, unit.test_rows);
    return TrialOutcome{picp(y, iv), mpiw(iv)};
  };
}

// ---------------------------------------------------------------------------
// Softening-factor sweep

struct SweepRow {
  double softening = 0.0;
  double lambda = 0.0;
  double confidence = 0.0;
  double picp_s = 0.0;  // at this row's softening factor
  double mpiw_s = 0.0;
  double picp = 0.0;
  double mpiw = 0.0;
};

/// Trains one soft-loss model per (s, lambda) pair at `confidence` on the
/// first fold's training rows and records soft and hard metrics on its
/// held-out rows.
inline std::vector<SweepRow> softening_sweep(const Dataset& ds, const std::vector<double>& s_values,
                                             const std::vector<double>& lambda_values,
                                             const ScenarioConfig& cfg, double confidence) {
  if (s_values.empty() || lambda_values.empty()) throw ConfigError("sweep grids must be nonempty");
  ds.validate();
  const auto folds = kfold_split(ds, std::min(cfg.folds, ds.rows()), cfg.seed);
  const auto fd = detail::prepare_fold(ds, folds[0].train, folds[0].test, cfg, 0);
  const Split test{fd.norm.apply(take_rows(ds.features, fd.test_rows)), take(ds.labels, fd.test_rows)};

  std::vector<SweepRow> rows(s_values.size() * lambda_values.size());
  parallel_for(rows.size(), cfg.jobs, [&](std::size_t idx) {
    const double s = s_values[idx / lambda_values.size()];
    const double lambda = lambda_values[idx % lambda_values.size()];
    ScenarioConfig c = cfg;
    c.method = Method::loss_s;
    c.loss_s.softening = s;
    c.loss_s.lambda = lambda;
    const auto unit = detail::train_cell(fd, c, {confidence}, 0, std::size_t{0}, ds.cols());
    const IntervalBatch iv = forward(std::get<MLPParams>(unit.model), test.x);
    const auto terms = soft_loss_terms(test.y, iv, c.soft_for(confidence));
    rows[idx] = {s, lambda, confidence, terms.picp_s, terms.mpiw_s, picp(test.y, iv), mpiw(iv)};
  });
  return rows;
}

}  // namespace nnpi
