#pragma once

// Mini-batch gradient descent with learning-rate decay and a genetic
// algorithm over flat parameter vectors, plus the network trainers built on
// them (soft loss by GD, LUBE loss by GA).

#include "nnpi/core.hpp"
#include "nnpi/losses.hpp"
#include "nnpi/metrics.hpp"
#include "nnpi/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace nnpi {

/// Features and labels of one split.
struct Split {
  Matrix x;
  Vector y;

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }
  bool empty() const { return y.size() == 0; }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double picp = std::numeric_limits<double>::quiet_NaN();
  double mpiw = std::numeric_limits<double>::quiet_NaN();
};

using TrainHistory = std::vector<EpochRecord>;

// ---------------------------------------------------------------------------
// Gradient descent

struct GDConfig {
  double learning_rate = 0.01;
  double decay = 1e-5;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;
  double grad_tol = 1e-5;
  /// Full-batch gradient norm is evaluated every this many epochs.
  std::size_t grad_check_every = 1;
  /// Rescale any mini-batch gradient whose 2-norm exceeds this; 0 disables.
  double clip_norm = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (learning_rate < 0.001 || learning_rate > 0.1)
      throw ConfigError("learning rate outside [0.001, 0.1]");
    if (decay < 1e-6 || decay > 1e-4) throw ConfigError("decay outside [1e-6, 1e-4]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (grad_check_every < 1) throw ConfigError("grad_check_every must be >= 1");
    if (grad_tol < 0.0 || clip_norm < 0.0) throw ConfigError("negative tolerance");
  }

  /// Learning rate for epoch t (0-based).
  double rate_at(std::size_t epoch) const {
    return learning_rate / (1.0 + decay * static_cast<double>(epoch));
  }
};

struct GDResult {
  Vector theta;
  TrainHistory history;
  std::size_t epochs_run = 0;
  bool converged = false;  // stopped on the gradient-norm rule
};

/// Minimizes over a flat parameter vector.
///
/// `batch_loss(theta, rows, grad)` returns the loss on `rows` and writes its
/// gradient. `on_epoch(theta, record)` fills validation fields of the record;
/// when it sets a finite val_loss, the best-validation parameters are
/// returned, otherwise the final ones.
template <typename BatchLoss, typename OnEpoch>
GDResult gd_minimize(Vector theta, std::size_t n, BatchLoss&& batch_loss, const GDConfig& cfg,
                     OnEpoch&& on_epoch) {
  cfg.validate();
  if (n == 0) throw EmptyInputError("gradient descent on empty data");
  Index all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Vector grad(theta.size());

  GDResult result;
  auto full_grad_small = [&] {
    const double loss = batch_loss(theta, all, grad);
    if (!std::isfinite(loss) || !grad.allFinite())
      throw NumericalError("non-finite loss or gradient; learning rate may be too high");
    return grad.norm() < cfg.grad_tol;
  };
  if (full_grad_small()) {
    result.theta = std::move(theta);
    result.converged = true;
    return result;
  }

  std::mt19937_64 rng(cfg.seed);
  Index order = all;
  const std::size_t batch = std::min(cfg.batch_size, n);
  double best_val = std::numeric_limits<double>::infinity();
  std::optional<Vector> best_theta;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double rate = cfg.rate_at(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    Index rows;
    for (std::size_t start = 0; start < n; start += batch) {
      rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                  order.begin() + static_cast<std::ptrdiff_t>(std::min(start + batch, n)));
      const double loss = batch_loss(theta, rows, grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) +
                             "; learning rate may be too high");
      if (cfg.clip_norm > 0.0) {
        const double norm = grad.norm();
        if (norm > cfg.clip_norm) grad *= cfg.clip_norm / norm;
      }
      theta -= rate * grad;
      loss_sum += loss;
      ++batches;
    }
    ++result.epochs_run;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    on_epoch(theta, rec);
    result.history.push_back(rec);
    if (std::isfinite(rec.val_loss) && rec.val_loss < best_val) {
      best_val = rec.val_loss;
      best_theta = theta;
    }
    if ((epoch + 1) % cfg.grad_check_every == 0 && full_grad_small()) {
      result.converged = true;
      break;
    }
  }
  result.theta = best_theta ? std::move(*best_theta) : std::move(theta);
  return result;
}

template <typename BatchLoss>
GDResult gd_minimize(Vector theta, std::size_t n, BatchLoss&& batch_loss, const GDConfig& cfg) {
  return gd_minimize(std::move(theta), n, std::forward<BatchLoss>(batch_loss), cfg,
                     [](const Vector&, EpochRecord&) {});
}

// ---------------------------------------------------------------------------
// Network evaluation helpers

struct EpochEval {
  double loss = 0.0;
  PIQuality quality;
};

inline EpochEval evaluate_epoch(const MLPParams& net, const Split& split, const LossSConfig& cfg,
                                double range) {
  const IntervalBatch iv = forward(net, split.x);
  return {loss_soft(split.y, iv, cfg), assess(split.y, iv, range)};
}

inline EpochEval evaluate_epoch(const MLPParams& net, const Split& split, const LossLConfig& cfg,
                                double range) {
  const IntervalBatch iv = forward(net, split.x);
  return {loss_lube(split.y, iv, cfg, range), assess(split.y, iv, range)};
}

struct TrainResult {
  MLPParams params;
  TrainHistory history;
  std::size_t epochs_run = 0;
};

/// Trains an interval net on the soft loss. `val` may be empty, in which case
/// the final parameters are returned.
inline TrainResult gd_train(const MLPParams& net, const Split& train, const Split& val,
                            const LossSConfig& loss_cfg, const GDConfig& cfg) {
  if (net.config.output_dim != 2) throw ConfigError("gd_train requires an interval network");
  if (train.empty()) throw EmptyInputError("gd_train on empty training split");
  loss_cfg.validate();
  const MLPConfig& net_cfg = net.config;
  const double range = std::max(train.y.maxCoeff() - train.y.minCoeff(), 1e-12);

  auto batch_loss = [&](const Vector& theta, const Index& rows, Vector& grad) {
    const MLPParams p = unflatten(net_cfg, theta);
    const bool whole = rows.size() == train.size();
    const Matrix xb = whole ? train.x : take_rows(train.x, rows);
    const Vector yb = whole ? train.y : take(train.y, rows);
    ForwardCache cache;
    const Matrix out = forward_raw(p, xb, &cache);
    const IntervalBatch iv{out.col(0), out.col(1)};
    const double loss = loss_soft(yb, iv, loss_cfg);
    const IntervalGradient g = loss_soft_grad(yb, iv, loss_cfg);
    Matrix upstream(xb.rows(), 2);
    upstream.col(0) = g.lower;
    upstream.col(1) = g.upper;
    grad = flatten(backward(p, xb, upstream, cache));
    return loss;
  };
  auto on_epoch = [&](const Vector& theta, EpochRecord& rec) {
    if (val.empty()) return;
    const auto e = evaluate_epoch(unflatten(net_cfg, theta), val, loss_cfg, range);
    rec.val_loss = e.loss;
    rec.picp = e.quality.picp;
    rec.mpiw = e.quality.mpiw;
  };
  GDResult r = gd_minimize(flatten(net), train.size(), batch_loss, cfg, on_epoch);
  return {unflatten(net_cfg, r.theta), std::move(r.history), r.epochs_run};
}

/// Point regressor trained on mean squared error.
inline TrainResult gd_train_mse(const MLPParams& net, const Split& train, const Split& val,
                                const GDConfig& cfg) {
  if (net.config.output_dim != 1) throw ConfigError("gd_train_mse requires a point network");
  if (train.empty()) throw EmptyInputError("gd_train_mse on empty training split");
  const MLPConfig& net_cfg = net.config;
  auto batch_loss = [&](const Vector& theta, const Index& rows, Vector& grad) {
    const MLPParams p = unflatten(net_cfg, theta);
    const bool whole = rows.size() == train.size();
    const Matrix xb = whole ? train.x : take_rows(train.x, rows);
    const Vector yb = whole ? train.y : take(train.y, rows);
    ForwardCache cache;
    const Matrix out = forward_raw(p, xb, &cache);
    const Vector resid = out.col(0) - yb;
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    Matrix upstream = 2.0 * inv_n * resid;
    grad = flatten(backward(p, xb, upstream, cache));
    return resid.squaredNorm() * inv_n;
  };
  auto on_epoch = [&](const Vector& theta, EpochRecord& rec) {
    if (val.empty()) return;
    const Vector pred = forward_point(unflatten(net_cfg, theta), val.x);
    rec.val_loss = (pred - val.y).squaredNorm() / static_cast<double>(val.size());
  };
  GDResult r = gd_minimize(flatten(net), train.size(), batch_loss, cfg, on_epoch);
  return {unflatten(net_cfg, r.theta), std::move(r.history), r.epochs_run};
}

// ---------------------------------------------------------------------------
// Genetic algorithm

struct GAConfig {
  std::size_t population = 16;
  std::size_t parents_mating = 8;
  double genes_mutated_pct = 15.0;
  std::size_t generations = 200;
  std::size_t tournament_size = 3;
  std::size_t elitism = 1;
  double mutation_scale = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (population < 2) throw ConfigError("GA population must be >= 2");
    if (population < 10 || population > 20) throw ConfigError("GA population outside [10, 20]");
    if (parents_mating < 5 || parents_mating > 10)
      throw ConfigError("GA parents_mating outside [5, 10]");
    if (genes_mutated_pct < 10.0 || genes_mutated_pct > 20.0)
      throw ConfigError("GA genes_mutated_pct outside [10, 20]");
    if (elitism < 1 || elitism >= population) throw ConfigError("GA elitism must be in [1, population)");
    if (tournament_size < 1) throw ConfigError("GA tournament_size must be >= 1");
    if (generations < 1) throw ConfigError("GA generations must be >= 1");
    if (!(mutation_scale >= 0.0)) throw ConfigError("GA mutation_scale must be >= 0");
  }
};

/// Genes perturbed per child: pct% of the chromosome, rounded half up.
inline std::size_t mutated_gene_count(double pct, std::size_t genes) {
  const auto m = static_cast<std::size_t>(std::floor(pct * static_cast<double>(genes) / 100.0 + 0.5));
  return std::min(m, genes);
}

struct GenerationRecord {
  std::size_t generation = 0;
  double best_fitness = 0.0;  // best in this generation's population
};

struct GAResult {
  Vector best;
  double best_fitness = -std::numeric_limits<double>::infinity();
  std::vector<GenerationRecord> history;
};

namespace detail {

/// Applies the GA's mutation to `child` in place; returns indices touched.
inline Index mutate(Vector& child, double pct, double scale, std::mt19937_64& rng) {
  const std::size_t genes = static_cast<std::size_t>(child.size());
  const std::size_t m = mutated_gene_count(pct, genes);
  Index idx(genes);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::normal_distribution<double> gauss(0.0, scale);
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, genes - 1);
    std::swap(idx[i], idx[pick(rng)]);
    child[static_cast<Eigen::Index>(idx[i])] += gauss(rng);
  }
  idx.resize(m);
  return idx;
}

}  // namespace detail

/// Maximizes `fitness` over fixed-length chromosomes. Each generation keeps
/// the top `elitism` individuals unchanged, selects `parents_mating` parents
/// by tournament, and fills the rest with single-point-crossover children
/// whose genes are then mutated additively. `on_generation(best, record)` is
/// called after every evaluation pass.
template <typename Fitness, typename OnGeneration>
GAResult ga_maximize(std::vector<Vector> population, Fitness&& fitness, const GAConfig& cfg,
                     OnGeneration&& on_generation) {
  cfg.validate();
  if (population.size() != cfg.population)
    throw ConfigError("initial population size does not match GAConfig");
  const Eigen::Index genes = population.front().size();
  for (const auto& c : population)
    if (c.size() != genes) throw ShapeError("chromosomes differ in length");

  std::mt19937_64 rng(cfg.seed);
  auto score = [&](const Vector& c) {
    const double f = fitness(c);
    return std::isfinite(f) ? f : -std::numeric_limits<double>::infinity();
  };
  std::vector<double> fit(population.size());
  for (std::size_t i = 0; i < population.size(); ++i) fit[i] = score(population[i]);

  GAResult result;
  for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
    Index rank(population.size());
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::stable_sort(rank.begin(), rank.end(), [&](auto a, auto b) { return fit[a] > fit[b]; });
    if (result.history.empty() || fit[rank[0]] > result.best_fitness) {
      result.best_fitness = fit[rank[0]];
      result.best = population[rank[0]];
    }
    GenerationRecord rec{gen, fit[rank[0]]};
    on_generation(population[rank[0]], rec);
    result.history.push_back(rec);
    if (gen + 1 == cfg.generations) break;

    std::uniform_int_distribution<std::size_t> any(0, population.size() - 1);
    Index parents(cfg.parents_mating);
    for (auto& p : parents) {
      std::size_t winner = any(rng);
      for (std::size_t t = 1; t < cfg.tournament_size; ++t) {
        const std::size_t c = any(rng);
        if (fit[c] > fit[winner] || (fit[c] == fit[winner] && c < winner)) winner = c;
      }
      p = winner;
    }

    std::vector<Vector> next;
    std::vector<double> next_fit;
    next.reserve(population.size());
    for (std::size_t e = 0; e < cfg.elitism; ++e) {
      next.push_back(population[rank[e]]);
      next_fit.push_back(fit[rank[e]]);
    }
    std::uniform_int_distribution<std::size_t> pick_parent(0, parents.size() - 1);
    while (next.size() < population.size()) {
      const std::size_t a = pick_parent(rng);
      std::size_t b = pick_parent(rng);
      if (parents.size() > 1)
        while (b == a) b = pick_parent(rng);
      Vector child = population[parents[a]];
      if (genes > 1) {
        std::uniform_int_distribution<Eigen::Index> cut_dist(1, genes - 1);
        const Eigen::Index cut = cut_dist(rng);
        child.tail(genes - cut) = population[parents[b]].tail(genes - cut);
      }
      detail::mutate(child, cfg.genes_mutated_pct, cfg.mutation_scale, rng);
      next_fit.push_back(score(child));
      next.push_back(std::move(child));
    }
    population = std::move(next);
    fit = std::move(next_fit);
  }
  return result;
}

template <typename Fitness>
GAResult ga_maximize(std::vector<Vector> population, Fitness&& fitness, const GAConfig& cfg) {
  return ga_maximize(std::move(population), std::forward<Fitness>(fitness), cfg,
                     [](const Vector&, GenerationRecord&) {});
}

/// Trains an interval net on the LUBE loss (train-mode gamma = 1) by GA.
/// History records train loss of the generation's best individual and, when
/// `val` is nonempty, its validation loss, PICP and MPIW.
inline TrainResult ga_train(const MLPConfig& net_cfg, const Split& train, const Split& val,
                            const LossLConfig& loss_cfg, const GAConfig& cfg, double label_min,
                            double label_max) {
  if (net_cfg.output_dim != 2) throw ConfigError("ga_train requires an interval network");
  if (train.empty()) throw EmptyInputError("ga_train on empty training split");
  cfg.validate();
  LossLConfig fit_cfg = loss_cfg;
  fit_cfg.mode = LubeMode::train;
  fit_cfg.validate();
  const double range = std::max(label_max - label_min, 1e-12);

  std::vector<Vector> population;
  for (std::size_t i = 0; i < cfg.population; ++i)
    population.push_back(flatten(init(net_cfg, derive_seed(cfg.seed, i, 0x6a), label_min, label_max)));

  auto fitness = [&](const Vector& c) {
    return -loss_lube(train.y, forward(unflatten(net_cfg, c), train.x), fit_cfg, range);
  };
  TrainHistory history;
  auto on_generation = [&](const Vector& best, GenerationRecord& rec) {
    EpochRecord e;
    e.epoch = rec.generation;
    e.train_loss = -rec.best_fitness;
    if (!val.empty()) {
      const auto ev = evaluate_epoch(unflatten(net_cfg, best), val, fit_cfg, range);
      e.val_loss = ev.loss;
      e.picp = ev.quality.picp;
      e.mpiw = ev.quality.mpiw;
    }
    history.push_back(e);
  };
  GAResult r = ga_maximize(std::move(population), fitness, cfg, on_generation);
  return {unflatten(net_cfg, r.best), std::move(history), r.history.size()};
}

}  // namespace nnpi
