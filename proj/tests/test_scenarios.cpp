#include "nnpi/scenarios.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <set>

using namespace nnpi;

namespace {

Dataset small_synth(std::size_t n, std::size_t subjects, std::size_t clusters, std::uint64_t seed = 3) {
  SynthConfig sc;
  sc.n = n;
  sc.d = 4;
  sc.subjects = subjects;
  sc.clusters = clusters;
  sc.seed = seed;
  return synth_generate(sc);
}

ScenarioConfig quick(Method m = Method::loss_s) {
  ScenarioConfig c;
  c.method = m;
  c.net.hidden_layers = {12};
  c.folds = 3;
  c.gd.max_epochs = 15;
  c.gd.batch_size = 32;
  c.ga.generations = 5;
  c.bootstrap_members = 3;
  c.bootstrap_gd.max_epochs = 5;
  c.seed = 9;
  return c;
}

double sse(const Matrix& pts, const std::vector<std::size_t>& assign, std::size_t k) {
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(pts.cols());
    double cnt = 0;
    for (std::size_t i = 0; i < assign.size(); ++i)
      if (assign[i] == c) {
        mean += pts.row(static_cast<Eigen::Index>(i));
        ++cnt;
      }
    if (cnt == 0) continue;
    mean /= cnt;
    for (std::size_t i = 0; i < assign.size(); ++i)
      if (assign[i] == c) total += (pts.row(static_cast<Eigen::Index>(i)) - mean).squaredNorm();
  }
  return total;
}

bool same_model(const Model& a, const Model& b) {
  if (a.index() != b.index()) return false;
  auto eq = [](const MLPParams& p, const MLPParams& q) { return flatten(p) == flatten(q); };
  if (a.index() == 0) return eq(std::get<0>(a), std::get<0>(b));
  const auto& ea = std::get<1>(a).members;
  const auto& eb = std::get<1>(b).members;
  if (ea.size() != eb.size()) return false;
  for (std::size_t i = 0; i < ea.size(); ++i)
    if (!eq(ea[i], eb[i])) return false;
  return true;
}

}  // namespace

TEST(KMeans, FindsBruteForceOptimumOnSeparatedPoints) {
  Matrix pts(7, 2);
  pts << 0, 0, 0.2, 0.1, 0.1, 0.3, 5, 5, 5.2, 4.9, 4.8, 5.1, 5.1, 5.3;
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << 7) - 1; ++mask) {
    std::vector<std::size_t> a(7);
    for (unsigned i = 0; i < 7; ++i) a[i] = (mask >> i) & 1u;
    best = std::min(best, sse(pts, a, 2));
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = kmeans(pts, 2, seed, 100);
    EXPECT_NEAR(sse(pts, r.assignments, 2), best, 1e-12);
  }
}

TEST(KMeans, EveryPointSitsWithItsNearestCentroidAndObjectiveNeverRises) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Matrix pts(60, 3);
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    for (Eigen::Index j = 0; j < pts.cols(); ++j) pts(i, j) = g(rng);
  const auto r = kmeans(pts, 4, 11, 100);
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    EXPECT_EQ(r.assignments[static_cast<std::size_t>(i)], nearest_centroid(r.centroids, pts.row(i)));
  for (std::size_t t = 1; t < r.objective.size(); ++t) EXPECT_LE(r.objective[t], r.objective[t - 1] + 1e-12);
}

TEST(KMeans, RejectsBadK) {
  Matrix pts = Matrix::Zero(3, 2);
  EXPECT_THROW(kmeans(pts, 0, 1, 10), ConfigError);
  EXPECT_THROW(kmeans(pts, 4, 1, 10), Error);
}

TEST(Folds, FeasibleCountShrinksWithRows) {
  ScenarioConfig c;
  c.folds = 10;
  c.min_test_rows = 2;
  EXPECT_EQ(detail::feasible_folds(100, c), 10u);
  EXPECT_EQ(detail::feasible_folds(15, c), 7u);
  EXPECT_EQ(detail::feasible_folds(4, c), 2u);
  EXPECT_EQ(detail::feasible_folds(3, c), 0u);
}

TEST(Generalized, ReportShapeAndTestRowsPartitionData) {
  const auto ds = small_synth(240, 6, 2);
  const auto run = train_generalized(ds, quick(), {0.5, 0.95});
  ASSERT_EQ(run.groups.size(), 1u);
  EXPECT_EQ(run.units.size(), 3u * 2u);
  std::multiset<std::size_t> seen;
  for (const auto& u : run.units)
    if (u.confidence == std::size_t{0}) seen.insert(u.test_rows.begin(), u.test_rows.end());
  EXPECT_EQ(seen.size(), ds.rows());
  EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), ds.rows());
  const auto rep = assemble_report(ds, run);
  ASSERT_EQ(rep.results.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.range, ds.label_range());
  for (const auto& r : rep.results) {
    EXPECT_GE(r.quality.picp, 0.0);
    EXPECT_LE(r.quality.picp, 1.0);
    EXPECT_NEAR(r.quality.nmpiw, r.quality.mpiw / rep.range, 1e-12);
  }
}

TEST(Generalized, RejectsBadConfidencesAndTinyData) {
  const auto ds = small_synth(60, 3, 1);
  EXPECT_THROW(train_generalized(ds, quick(), {}), ConfigError);
  EXPECT_THROW(train_generalized(ds, quick(), {1.0}), ConfigError);
  EXPECT_THROW(train_generalized(ds.subset({0, 1, 2}), quick(), {0.5}), ConfigError);
}

TEST(Personalized, OneGroupPerSubjectAndSmallSubjectsWarned) {
  auto big = small_synth(90, 3, 1);
  // a fourth subject with three rows cannot fill two test folds of two
  for (std::size_t i = 0; i < 3; ++i) big.subject_ids[i] = "lonely";
  const auto run = train_personalized(big, quick(), {0.85});
  ASSERT_EQ(run.groups.size(), 3u);
  for (const auto& g : run.groups) EXPECT_EQ(g.subjects.size(), 1u);
  ASSERT_FALSE(run.warnings.empty());
  EXPECT_NE(run.warnings.front().find("lonely"), std::string::npos);
  const auto rep = assemble_report(big, run);
  EXPECT_EQ(rep.groups.size(), 3u);
}

TEST(Hybrid, RecoversPlantedClustersAndRoutesSubjects) {
  const auto ds = small_synth(400, 20, 4);
  auto cfg = quick();
  cfg.clusters = 4;
  const auto cm = cluster_subjects(ds, cfg);
  SynthConfig sc;
  sc.subjects = 20;
  sc.clusters = 4;
  // every learned cluster holds subjects from a single planted cluster
  std::map<std::size_t, std::set<std::size_t>> planted;
  for (std::size_t s = 0; s < cm.subjects.size(); ++s) {
    std::size_t idx = 0;
    for (std::size_t t = 0; t < 20; ++t)
      if (synth_subject_id(t) == cm.subjects[s]) idx = t;
    planted[cm.kmeans.assignments[s]].insert(synth_cluster_of_subject(sc, idx));
  }
  EXPECT_EQ(planted.size(), 4u);
  for (const auto& [c, p] : planted) EXPECT_EQ(p.size(), 1u) << "cluster " << c;

  for (std::size_t s = 0; s < cm.subjects.size(); ++s) {
    Index rows;
    for (std::size_t i = 0; i < ds.rows(); ++i)
      if (ds.subject_ids[i] == cm.subjects[s]) rows.push_back(i);
    EXPECT_EQ(cm.route(ds.subset(rows)), cm.kmeans.assignments[s]);
  }
  EXPECT_THROW(cm.route(ds), ConfigError);
}

TEST(Hybrid, GroupsCoverAllRows) {
  const auto ds = small_synth(400, 20, 4);
  auto cfg = quick();
  cfg.clusters = 4;
  const auto run = train_hybrid(ds, cfg, {0.85});
  ASSERT_TRUE(run.clusters.has_value());
  std::size_t total = 0;
  for (const auto& g : run.groups) total += g.rows.size();
  EXPECT_EQ(total, ds.rows());
  EXPECT_EQ(run.groups.size(), 4u);
}

TEST(Hybrid, NeedsAtLeastKSubjects) {
  const auto ds = small_synth(60, 3, 1);
  auto cfg = quick();
  cfg.clusters = 4;
  EXPECT_THROW(train_hybrid(ds, cfg, {0.85}), ConfigError);
}

TEST(Equivalence, HybridWithOneClusterMatchesGeneralized) {
  const auto ds = small_synth(200, 5, 2);
  auto cfg = quick();
  cfg.clusters = 1;
  const auto gen = train_generalized(ds, cfg, {0.75});
  const auto hyb = train_hybrid(ds, cfg, {0.75});
  ASSERT_EQ(gen.units.size(), hyb.units.size());
  for (std::size_t i = 0; i < gen.units.size(); ++i) {
    EXPECT_EQ(gen.units[i].test_rows, hyb.units[i].test_rows);
    EXPECT_TRUE(same_model(gen.units[i].model, hyb.units[i].model));
  }
  const auto a = assemble_report(ds, gen), b = assemble_report(ds, hyb);
  EXPECT_EQ(a.results[0].quality.picp, b.results[0].quality.picp);
  EXPECT_EQ(a.results[0].quality.mpiw, b.results[0].quality.mpiw);
}

TEST(Equivalence, PersonalizedOnOneSubjectMatchesGeneralized) {
  auto ds = small_synth(80, 1, 1);
  for (auto m : {Method::loss_s, Method::bootstrap}) {
    const auto gen = train_generalized(ds, quick(m), {0.85});
    const auto per = train_personalized(ds, quick(m), {0.85});
    ASSERT_EQ(gen.units.size(), per.units.size());
    for (std::size_t i = 0; i < gen.units.size(); ++i)
      EXPECT_TRUE(same_model(gen.units[i].model, per.units[i].model));
  }
}

TEST(Determinism, JobsDoNotChangeResults) {
  const auto ds = small_synth(150, 4, 2);
  for (auto m : {Method::loss_s, Method::loss_l, Method::bootstrap}) {
    auto c1 = quick(m), c4 = quick(m);
    c4.jobs = 4;
    const auto a = train_generalized(ds, c1, {0.5, 0.85});
    const auto b = train_generalized(ds, c4, {0.5, 0.85});
    ASSERT_EQ(a.units.size(), b.units.size());
    for (std::size_t i = 0; i < a.units.size(); ++i) EXPECT_TRUE(same_model(a.units[i].model, b.units[i].model));
  }
}

TEST(Determinism, SeedChangesModels) {
  const auto ds = small_synth(150, 4, 2);
  auto c1 = quick(), c2 = quick();
  c2.seed = 10;
  const auto a = train_generalized(ds, c1, {0.85});
  const auto b = train_generalized(ds, c2, {0.85});
  EXPECT_FALSE(same_model(a.units[0].model, b.units[0].model));
}

TEST(Tune, TrialsStayInSpaceAndBudgetIsHonoured) {
  SearchSpace sp;
  sp.target(0.85);
  std::size_t calls = 0;
  std::mutex mu;
  const auto res = tune(sp, quick(), 12,
                        [&](const TrialPoint& t) {
                          std::lock_guard lock(mu);
                          ++calls;
                          return TrialOutcome{t.config.loss_s.softening / 220.0, t.config.loss_s.lambda};
                        },
                        5);
  EXPECT_EQ(calls, 12u);
  ASSERT_EQ(res.trials.size(), 12u);
  for (const auto& t : res.trials) {
    EXPECT_TRUE(in_space(sp, t.point));
    EXPECT_DOUBLE_EQ(t.point.target, 0.85);
  }
  // winner: least shortfall, then smallest width
  for (const auto& t : res.trials) {
    const auto& b = res.trials[res.best_index];
    EXPECT_TRUE(b.shortfall < t.shortfall || (b.shortfall == t.shortfall && b.outcome.mpiw <= t.outcome.mpiw));
  }
  EXPECT_THROW(tune(sp, quick(), 0, [](const TrialPoint&) { return TrialOutcome{}; }, 1), ConfigError);
}

TEST(Tune, SameSeedSameTrials) {
  SearchSpace sp;
  std::mt19937_64 a(3), b(3);
  const auto ta = sample_trial(sp, quick(), a), tb = sample_trial(sp, quick(), b);
  EXPECT_EQ(ta.config.net.hidden_layers, tb.config.net.hidden_layers);
  EXPECT_EQ(ta.config.loss_s.softening, tb.config.loss_s.softening);
}

TEST(Tune, HoldoutObjectiveRunsOnRealTrial) {
  const auto ds = small_synth(150, 4, 2);
  SearchSpace sp;
  sp.target(0.85);
  std::mt19937_64 rng(1);
  auto t = sample_trial(sp, quick(), rng);
  const auto out = holdout_objective(ds)(t);
  EXPECT_GE(out.picp, 0.0);
  EXPECT_LE(out.picp, 1.0);
  EXPECT_TRUE(std::isfinite(out.mpiw));
}

TEST(Sweep, GridProducesOneRowPerPair) {
  const auto ds = small_synth(150, 4, 2);
  const auto rows = softening_sweep(ds, {10.0, 160.0}, {5.0, 30.0}, quick(), 0.85);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].softening, 10.0);
  EXPECT_EQ(rows[1].lambda, 30.0);
  EXPECT_EQ(rows[2].softening, 160.0);
  for (const auto& r : rows) {
    EXPECT_GE(r.picp_s, 0.0);
    EXPECT_LE(r.picp_s, 1.0);
    EXPECT_EQ(r.confidence, 0.85);
  }
  EXPECT_THROW(softening_sweep(ds, {}, {5.0}, quick(), 0.85), ConfigError);
}

TEST(Generalized, OverflowingLabelRangeIsNumericalFailure) {
  auto ds = small_synth(60, 3, 1);
  ds.labels[0] = 1e308;
  ds.labels[1] = -1e308;
  EXPECT_THROW(train_generalized(ds, quick(), {0.85}), NumericalError);
}
