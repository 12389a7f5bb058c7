#pragma once

// Training objectives for interval networks: the LUBE coverage-width loss
// (evaluated black-box by the genetic algorithm) and the soft loss with
// analytic per-sample gradients (used by gradient descent).

#include "nnpi/core.hpp"
#include "nnpi/metrics.hpp"

#include <cmath>

namespace nnpi {

enum class LubeMode { train, test };

struct LossLConfig {
  double eta = 50.0;  // amplification of the coverage gap
  double mu = 0.85;   // target coverage
  LubeMode mode = LubeMode::train;

  void validate() const {
    if (!(eta > 0.0)) throw ConfigError("LUBE eta must be > 0");
    if (!(mu > 0.0 && mu < 1.0)) throw ConfigError("LUBE mu must lie in (0, 1)");
  }
};

/// NMPIW * (1 + gamma * exp(-eta * (PICP - mu))). gamma is 1 in train mode;
/// in test mode it is 0 once coverage reaches mu.
inline double loss_lube(const Vector& y, const IntervalBatch& iv, const LossLConfig& cfg,
                        double range) {
  cfg.validate();
  const double coverage = picp(y, iv);
  const double width = nmpiw(mpiw(iv), range);
  const double gamma = (cfg.mode == LubeMode::test && coverage >= cfg.mu) ? 0.0 : 1.0;
  return width * (1.0 + gamma * std::exp(-cfg.eta * (coverage - cfg.mu)));
}

// ---------------------------------------------------------------------------

/// Which side of the hinge the square sits on. `squared_hinge` is
/// max(0, (1-a) - PICP_S)^2; `literal` is max(0, (1-a) - PICP_S^2).
enum class PenaltyForm { squared_hinge, literal };

struct LossSConfig {
  double lambda = 15.0;
  double eta = 64.0;
  double alpha = 0.15;  // target coverage is 1 - alpha
  double softening = 160.0;
  PenaltyForm penalty = PenaltyForm::squared_hinge;

  double target() const { return 1.0 - alpha; }
  double penalty_scale() const { return lambda * eta / (alpha * (1.0 - alpha)); }

  void validate() const {
    if (!(lambda > 0.0)) throw ConfigError("soft loss lambda must be > 0");
    if (!(eta > 0.0)) throw ConfigError("soft loss eta must be > 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("soft loss alpha must lie in (0, 1)");
    if (!(softening > 0.0)) throw ConfigError("softening factor must be > 0");
  }
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Mean over samples of sigma(s (y - L)) * sigma(s (U - y)).
inline double picp_soft(const Vector& y, const IntervalBatch& iv, double softening) {
  detail::check_batch(y, iv);
  if (!(softening > 0.0)) throw ConfigError("softening factor must be > 0");
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    total += sigmoid(softening * (y[i] - iv.lower[i])) * sigmoid(softening * (iv.upper[i] - y[i]));
  return total / static_cast<double>(y.size());
}

struct CapturedWidth {
  double width = 0.0;
  Vector mask;
  bool empty_capture = false;
};

/// Mean width over captured samples only; 0 (flagged) when nothing is captured.
inline CapturedWidth mpiw_captured(const Vector& y, const IntervalBatch& iv,
                                   const Vector* frozen_mask = nullptr) {
  CapturedWidth out;
  out.mask = frozen_mask ? *frozen_mask : capture_mask(y, iv);
  if (out.mask.size() != y.size()) throw ShapeError("capture mask length mismatch");
  const double captured = out.mask.sum();
  if (captured == 0.0) {
    out.empty_capture = true;
    return out;
  }
  out.width = out.mask.dot(iv.upper - iv.lower) / captured;
  return out;
}

struct SoftLossTerms {
  double picp_s = 0.0;
  double mpiw_s = 0.0;
  double penalty = 0.0;
  double loss = 0.0;
  bool empty_capture = false;
};

/// Coverage penalty and its derivative with respect to PICP_S.
inline std::pair<double, double> soft_penalty(double picp_s, const LossSConfig& cfg) {
  const double scale = cfg.penalty_scale();
  if (cfg.penalty == PenaltyForm::literal) {
    const double gap = cfg.target() - picp_s * picp_s;
    if (gap <= 0.0) return {0.0, 0.0};
    return {scale * gap, -2.0 * scale * picp_s};
  }
  const double gap = cfg.target() - picp_s;
  if (gap <= 0.0) return {0.0, 0.0};
  return {scale * gap * gap, -2.0 * scale * gap};
}

inline SoftLossTerms soft_loss_terms(const Vector& y, const IntervalBatch& iv,
                                     const LossSConfig& cfg, const Vector* frozen_mask = nullptr) {
  cfg.validate();
  SoftLossTerms t;
  t.picp_s = picp_soft(y, iv, cfg.softening);
  const auto captured = mpiw_captured(y, iv, frozen_mask);
  t.mpiw_s = captured.width;
  t.empty_capture = captured.empty_capture;
  t.penalty = soft_penalty(t.picp_s, cfg).first;
  t.loss = t.mpiw_s + t.penalty;
  return t;
}

inline double loss_soft(const Vector& y, const IntervalBatch& iv, const LossSConfig& cfg) {
  return soft_loss_terms(y, iv, cfg).loss;
}

/// Soft loss with the capture mask held fixed; the function loss_soft_grad
/// differentiates.
inline double loss_soft_frozen(const Vector& y, const IntervalBatch& iv, const LossSConfig& cfg,
                               const Vector& mask) {
  return soft_loss_terms(y, iv, cfg, &mask).loss;
}

struct IntervalGradient {
  Vector lower;
  Vector upper;
};

/// dLoss_S/dL_i and dLoss_S/dU_i with the capture mask frozen at the current
/// bounds.
inline IntervalGradient loss_soft_grad(const Vector& y, const IntervalBatch& iv,
                                       const LossSConfig& cfg, const Vector* frozen_mask = nullptr) {
  cfg.validate();
  detail::check_batch(y, iv);
  const auto n = y.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double s = cfg.softening;

  IntervalGradient g{Vector::Zero(n), Vector::Zero(n)};
  const auto captured = mpiw_captured(y, iv, frozen_mask);
  if (!captured.empty_capture) {
    const double inv_k = 1.0 / captured.mask.sum();
    g.upper = captured.mask * inv_k;
    g.lower = -g.upper;
  }

  // 1 - sigma(x) is taken as sigma(-x) to keep precision in the tails.
  Vector lo_sig(n), hi_sig(n), lo_rest(n), hi_rest(n);
  double picp_s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = s * (y[i] - iv.lower[i]);
    const double b = s * (iv.upper[i] - y[i]);
    lo_sig[i] = sigmoid(a);
    hi_sig[i] = sigmoid(b);
    lo_rest[i] = sigmoid(-a);
    hi_rest[i] = sigmoid(-b);
    picp_s += lo_sig[i] * hi_sig[i];
  }
  picp_s *= inv_n;
  const double dpen = soft_penalty(picp_s, cfg).second;
  if (dpen != 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double prod = lo_sig[i] * hi_sig[i];
      // d/dL sigma(s(y-L)) = -s sigma (1 - sigma); d/dU sigma(s(U-y)) = s sigma (1 - sigma)
      g.lower[i] += dpen * inv_n * (-s * prod * lo_rest[i]);
      g.upper[i] += dpen * inv_n * (s * prod * hi_rest[i]);
    }
  }
  return g;
}

}  // namespace nnpi
